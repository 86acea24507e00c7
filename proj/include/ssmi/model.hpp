#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "ssmi/ssm.hpp"
#include "ssmi/tensor.hpp"

namespace ssmi {

enum class Ablation { none, no_state_dynamics, no_visual };
enum class FreezeMode { pretrain_ssm, finetune_ssm, full, frozen };

const char* to_string(Ablation a);
const char* to_string(FreezeMode m);
const char* to_string(VisualMode m);
Ablation ablation_from_string(const std::string& s);
FreezeMode freeze_mode_from_string(const std::string& s);
VisualMode visual_mode_from_string(const std::string& s);

struct LvlmConfig {
    std::size_t layers = 4;
    std::size_t d_model = 64;
    std::size_t n_heads = 4;
    std::size_t state_size = 16;
    std::size_t vocab = 256;
    std::size_t d_visual = 32;
    std::size_t d_raw = 16;
    std::size_t max_seq = 16;
    VisualMode visual_mode = VisualMode::additive;
    Ablation ablation = Ablation::none;
    double ssm_scale = 0.9;

    void validate() const;
    // Sequence-start token fed at position 0; reserved at the top of the
    // vocabulary, so dataset token ids must stay below vocab - 1.
    std::uint32_t bos_id() const { return static_cast<std::uint32_t>(vocab - 1); }
    bool operator==(const LvlmConfig&) const = default;
};

struct LayerWeights {
    TensorPtr wq, wk, wv, wo;  // attention projections, each [d x d]
    TensorPtr w1, b1, w2, b2;  // FFN: [d x 4d], [4d], [4d x d], [d]
    SsmParams ssm;
};

struct NamedTensor {
    std::string name;
    TensorPtr t;
    bool is_ssm = false;
    bool never_trainable = false;  // vision stub
};

struct ForwardDetail {
    TensorPtr logits;   // [T x vocab], present when requested
    TensorPtr ssm_tap;  // [T x d] final-layer scan output, present when requested
};

// Toy vision-language backbone: token+position embeddings, `layers` blocks of
// causal MHSA -> state space memory -> FFN (each residual), linear decoder
// head, and a frozen random projection standing in for the vision encoder.
class LvlmModel {
public:
    LvlmModel(LvlmConfig cfg, std::uint64_t seed);

    const LvlmConfig& config() const { return cfg_; }
    LayerWeights& layer(std::size_t l) { return layers_.at(l); }
    const LayerWeights& layer(std::size_t l) const { return layers_.at(l); }
    const TensorPtr& token_embedding() const { return token_embedding_; }
    const TensorPtr& positional_embedding() const { return positional_embedding_; }
    const TensorPtr& decoder_head() const { return decoder_head_; }
    const TensorPtr& vision_stub() const { return vision_stub_; }

    // V = vision_stub * raw. Frozen projection, never trainable.
    TensorPtr vision_encode(const TensorPtr& raw) const;
    // Causal multi-head self-attention with residual: H + Attn(H).
    TensorPtr mhsa_forward(std::size_t layer, const TensorPtr& H) const;
    // One block: FFN(residual) ( MHSA(H) + SSM(condition(MHSA(H), V)) ).
    TensorPtr block_forward(std::size_t layer, const TensorPtr& H, const TensorPtr& V) const;
    // Per-position next-token distributions (softmax rows).
    TensorPtr forward(const std::vector<std::uint32_t>& tokens, const TensorPtr& raw_visual) const;
    ForwardDetail forward_detail(const std::vector<std::uint32_t>& tokens,
                                 const TensorPtr& raw_visual, bool need_logits,
                                 bool need_tap) const;
    // Reference path with the state space modules removed entirely. Takes no
    // visual input: V reaches the network only through the modules.
    TensorPtr forward_backbone_only(const std::vector<std::uint32_t>& tokens) const;

    void set_freeze_mode(FreezeMode mode);
    FreezeMode freeze_mode() const { return mode_; }
    // Trainable fraction of the model parameters. The vision stub is a fixed
    // input projection that no mode can train, so it sits outside the census;
    // full mode therefore reports exactly 1.
    double trainable_ratio() const;
    std::size_t total_param_count() const;      // every stored tensor
    std::size_t countable_param_count() const;  // census denominator
    std::size_t trainable_param_count() const;

    std::vector<NamedTensor> named_tensors() const;  // canonical checkpoint order
    std::vector<TensorPtr> trainable_tensors() const;

    // Deep copy, optionally switching the ablation setting. Freeze mode and
    // all weights carry over.
    std::unique_ptr<LvlmModel> clone(Ablation ablation) const;
    std::unique_ptr<LvlmModel> clone() const { return clone(cfg_.ablation); }

    // Replace every state space module with a fresh stable init (used after
    // backbone preparation). Keeps the current freeze mode.
    void reinit_ssm(std::uint64_t seed);
    // Post-optimizer spectral radius guard over all layers.
    void enforce_ssm_stability();

private:
    struct BlockOut {
        TensorPtr out;
        TensorPtr scan_y;
    };
    BlockOut block_detail(std::size_t layer, const TensorPtr& H, const TensorPtr& V) const;
    TensorPtr embed(const std::vector<std::uint32_t>& tokens) const;

    LvlmConfig cfg_;
    TensorPtr token_embedding_;       // [vocab x d]
    TensorPtr positional_embedding_;  // [max_seq x d]
    TensorPtr vision_stub_;           // [d_v x d_raw]
    TensorPtr decoder_head_;          // [d x vocab]
    std::vector<LayerWeights> layers_;
    FreezeMode mode_ = FreezeMode::frozen;
};

}  // namespace ssmi
