#include "ssmi/model.hpp"

#include <cmath>
#include <numeric>

namespace ssmi {

const char* to_string(Ablation a) {
    switch (a) {
        case Ablation::none: return "none";
        case Ablation::no_state_dynamics: return "no_state_dynamics";
        case Ablation::no_visual: return "no_visual";
    }
    return "?";
}

const char* to_string(FreezeMode m) {
    switch (m) {
        case FreezeMode::pretrain_ssm: return "pretrain_ssm";
        case FreezeMode::finetune_ssm: return "finetune_ssm";
        case FreezeMode::full: return "full";
        case FreezeMode::frozen: return "frozen";
    }
    return "?";
}

const char* to_string(VisualMode m) {
    return m == VisualMode::additive ? "additive" : "prefix";
}

Ablation ablation_from_string(const std::string& s) {
    if (s == "none") return Ablation::none;
    if (s == "no_state_dynamics") return Ablation::no_state_dynamics;
    if (s == "no_visual") return Ablation::no_visual;
    throw ParseError("unknown ablation '" + s + "'");
}

FreezeMode freeze_mode_from_string(const std::string& s) {
    if (s == "pretrain_ssm") return FreezeMode::pretrain_ssm;
    if (s == "finetune_ssm") return FreezeMode::finetune_ssm;
    if (s == "full") return FreezeMode::full;
    if (s == "frozen") return FreezeMode::frozen;
    throw ParseError("unknown freeze mode '" + s + "'");
}

VisualMode visual_mode_from_string(const std::string& s) {
    if (s == "additive") return VisualMode::additive;
    if (s == "prefix") return VisualMode::prefix;
    throw ParseError("unknown visual mode '" + s + "'");
}

void LvlmConfig::validate() const {
    if (layers < 1 || d_model < 1 || n_heads < 1 || state_size < 1 || vocab < 2 ||
        d_visual < 1 || d_raw < 1 || max_seq < 1) {
        throw ContractError("model config: all sizes must be >= 1 (vocab >= 2)");
    }
    if (d_model % n_heads != 0) {
        throw ContractError("model config: d_model " + std::to_string(d_model) +
                            " not divisible by n_heads " + std::to_string(n_heads));
    }
    if (!(ssm_scale > 0.0 && ssm_scale < 1.0)) {
        throw ContractError("model config: ssm_scale must be in (0,1)");
    }
}

LvlmModel::LvlmModel(LvlmConfig cfg, std::uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    const std::size_t d = cfg_.d_model;
    Rng root(seed);
    Rng re = root.fork(1), rp = root.fork(2), rs = root.fork(3), rd = root.fork(4);
    token_embedding_ = randn({cfg_.vocab, d}, re, 0.08);
    positional_embedding_ = randn({cfg_.max_seq, d}, rp, 0.08);
    // Unit-variance visual embedding for standard-normal raw features.
    vision_stub_ = randn({cfg_.d_visual, cfg_.d_raw}, rs, 1.0 / std::sqrt(double(cfg_.d_raw)));
    decoder_head_ = randn({d, cfg_.vocab}, rd, 0.08);

    layers_.resize(cfg_.layers);
    for (std::size_t l = 0; l < cfg_.layers; ++l) {
        Rng rl = root.fork(16 + l);
        LayerWeights& w = layers_[l];
        w.wq = randn({d, d}, rl, 0.08);
        w.wk = randn({d, d}, rl, 0.08);
        w.wv = randn({d, d}, rl, 0.08);
        w.wo = randn({d, d}, rl, 0.08);
        w.w1 = randn({d, 4 * d}, rl, 0.08);
        w.b1 = zeros({4 * d});
        w.w2 = randn({4 * d, d}, rl, 0.08);
        w.b2 = zeros({d});
        w.ssm = init_stable(rl.next(), cfg_.state_size, d, cfg_.d_visual, cfg_.ssm_scale);
    }
    set_freeze_mode(FreezeMode::frozen);
}

TensorPtr LvlmModel::vision_encode(const TensorPtr& raw) const {
    if (raw->shape != std::vector<std::size_t>{cfg_.d_raw}) {
        throw DimensionError("vision_encode: raw features " + shape_str(raw->shape) +
                             " do not match width " + std::to_string(cfg_.d_raw));
    }
    return matmul(vision_stub_, raw);
}

TensorPtr LvlmModel::embed(const std::vector<std::uint32_t>& tokens) const {
    if (tokens.empty()) throw ContractError("forward: empty token sequence");
    if (tokens.size() > cfg_.max_seq) {
        throw ContractError("forward: sequence length " + std::to_string(tokens.size()) +
                            " exceeds max_seq " + std::to_string(cfg_.max_seq));
    }
    std::vector<std::uint32_t> positions(tokens.size());
    std::iota(positions.begin(), positions.end(), 0u);
    return add(gather_rows(token_embedding_, tokens), gather_rows(positional_embedding_, positions));
}

TensorPtr LvlmModel::mhsa_forward(std::size_t layer, const TensorPtr& H) const {
    const LayerWeights& w = layers_.at(layer);
    const std::size_t T = H->shape[0];
    if (T > cfg_.max_seq) {
        throw ContractError("mhsa_forward: sequence length " + std::to_string(T) +
                            " exceeds max_seq " + std::to_string(cfg_.max_seq));
    }
    const std::size_t hd = cfg_.d_model / cfg_.n_heads;
    auto Q = matmul(H, w.wq);
    auto K = matmul(H, w.wk);
    auto V = matmul(H, w.wv);
    std::vector<TensorPtr> heads;
    heads.reserve(cfg_.n_heads);
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(hd));
    for (std::size_t h = 0; h < cfg_.n_heads; ++h) {
        auto qh = slice_cols(Q, h * hd, hd);
        auto kh = slice_cols(K, h * hd, hd);
        auto vh = slice_cols(V, h * hd, hd);
        auto scores = scale(matmul(qh, transpose(kh)), inv_sqrt);
        auto probs = causal_softmax(scores);
        heads.push_back(matmul(probs, vh));
    }
    auto attn = matmul(concat_cols(heads), w.wo);
    return add(H, attn);
}

LvlmModel::BlockOut LvlmModel::block_detail(std::size_t layer, const TensorPtr& H,
                                            const TensorPtr& V) const {
    const LayerWeights& w = layers_.at(layer);
    auto a1 = mhsa_forward(layer, H);

    const bool use_visual = cfg_.ablation != Ablation::no_visual;
    const bool state_path = cfg_.ablation != Ablation::no_state_dynamics;
    TensorPtr y;
    if (use_visual && cfg_.visual_mode == VisualMode::prefix) {
        auto vis_tok = reshape(matmul(w.ssm.W_v, V), {1, cfg_.d_model});
        auto y_full = scan(w.ssm, concat_rows(vis_tok, a1), state_path);
        y = slice_rows(y_full, 1, a1->shape[0]);
    } else {
        auto hc = use_visual ? condition_on_visual(w.ssm, a1, V) : a1;
        y = scan(w.ssm, hc, state_path);
    }
    auto a2 = add(a1, y);

    auto hidden = gelu(add(matmul(a2, w.w1), w.b1));
    auto ffn = add(matmul(hidden, w.w2), w.b2);
    return {add(a2, ffn), y};
}

TensorPtr LvlmModel::block_forward(std::size_t layer, const TensorPtr& H,
                                   const TensorPtr& V) const {
    return block_detail(layer, H, V).out;
}

ForwardDetail LvlmModel::forward_detail(const std::vector<std::uint32_t>& tokens,
                                        const TensorPtr& raw_visual, bool need_logits,
                                        bool need_tap) const {
    for (std::uint32_t id : tokens) {
        if (id >= cfg_.vocab) {
            throw IndexError("forward: token id " + std::to_string(id) + " out of range " +
                             std::to_string(cfg_.vocab));
        }
    }
    auto V = vision_encode(raw_visual);
    auto H = embed(tokens);
    ForwardDetail detail;
    for (std::size_t l = 0; l < cfg_.layers; ++l) {
        const bool last = l + 1 == cfg_.layers;
        if (last && need_tap && !need_logits) {
            // Stage-1 readout: the final module's scan output, nothing past it.
            auto a1 = mhsa_forward(l, H);
            const bool use_visual = cfg_.ablation != Ablation::no_visual;
            const bool state_path = cfg_.ablation != Ablation::no_state_dynamics;
            const LayerWeights& w = layers_[l];
            if (use_visual && cfg_.visual_mode == VisualMode::prefix) {
                auto vis_tok = reshape(matmul(w.ssm.W_v, V), {1, cfg_.d_model});
                auto y_full = scan(w.ssm, concat_rows(vis_tok, a1), state_path);
                detail.ssm_tap = slice_rows(y_full, 1, a1->shape[0]);
            } else {
                auto hc = use_visual ? condition_on_visual(w.ssm, a1, V) : a1;
                detail.ssm_tap = scan(w.ssm, hc, state_path);
            }
            return detail;
        }
        auto out = block_detail(l, H, V);
        if (last && need_tap) detail.ssm_tap = out.scan_y;
        H = out.out;
    }
    if (need_logits) detail.logits = matmul(H, decoder_head_);
    return detail;
}

TensorPtr LvlmModel::forward(const std::vector<std::uint32_t>& tokens,
                             const TensorPtr& raw_visual) const {
    auto detail = forward_detail(tokens, raw_visual, true, false);
    return softmax_last(detail.logits);
}

TensorPtr LvlmModel::forward_backbone_only(const std::vector<std::uint32_t>& tokens) const {
    for (std::uint32_t id : tokens) {
        if (id >= cfg_.vocab) {
            throw IndexError("forward: token id " + std::to_string(id) + " out of range " +
                             std::to_string(cfg_.vocab));
        }
    }
    auto H = embed(tokens);
    for (std::size_t l = 0; l < cfg_.layers; ++l) {
        const LayerWeights& w = layers_[l];
        auto a2 = mhsa_forward(l, H);
        auto hidden = gelu(add(matmul(a2, w.w1), w.b1));
        auto ffn = add(matmul(hidden, w.w2), w.b2);
        H = add(a2, ffn);
    }
    return softmax_last(matmul(H, decoder_head_));
}

std::vector<NamedTensor> LvlmModel::named_tensors() const {
    std::vector<NamedTensor> out;
    out.push_back({"token_embedding", token_embedding_, false, false});
    out.push_back({"positional_embedding", positional_embedding_, false, false});
    out.push_back({"vision_stub", vision_stub_, false, true});
    out.push_back({"decoder_head", decoder_head_, false, false});
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        const std::string p = "layers." + std::to_string(l) + ".";
        const LayerWeights& w = layers_[l];
        out.push_back({p + "attn.wq", w.wq, false, false});
        out.push_back({p + "attn.wk", w.wk, false, false});
        out.push_back({p + "attn.wv", w.wv, false, false});
        out.push_back({p + "attn.wo", w.wo, false, false});
        out.push_back({p + "ffn.w1", w.w1, false, false});
        out.push_back({p + "ffn.b1", w.b1, false, false});
        out.push_back({p + "ffn.w2", w.w2, false, false});
        out.push_back({p + "ffn.b2", w.b2, false, false});
        out.push_back({p + "ssm.A", w.ssm.A, true, false});
        out.push_back({p + "ssm.B", w.ssm.B, true, false});
        out.push_back({p + "ssm.C", w.ssm.C, true, false});
        out.push_back({p + "ssm.D", w.ssm.D, true, false});
        out.push_back({p + "ssm.W_v", w.ssm.W_v, true, false});
    }
    return out;
}

void LvlmModel::set_freeze_mode(FreezeMode mode) {
    mode_ = mode;
    for (auto& nt : named_tensors()) {
        bool trainable = false;
        switch (mode) {
            case FreezeMode::pretrain_ssm:
            case FreezeMode::finetune_ssm: trainable = nt.is_ssm; break;
            case FreezeMode::full: trainable = !nt.never_trainable; break;
            case FreezeMode::frozen: trainable = false; break;
        }
        nt.t->requires_grad = trainable;
    }
}

std::vector<TensorPtr> LvlmModel::trainable_tensors() const {
    std::vector<TensorPtr> out;
    for (auto& nt : named_tensors())
        if (nt.t->requires_grad) out.push_back(nt.t);
    return out;
}

std::size_t LvlmModel::total_param_count() const {
    std::size_t n = 0;
    for (auto& nt : named_tensors()) n += nt.t->numel();
    return n;
}

std::size_t LvlmModel::countable_param_count() const {
    std::size_t n = 0;
    for (auto& nt : named_tensors())
        if (!nt.never_trainable) n += nt.t->numel();
    return n;
}

std::size_t LvlmModel::trainable_param_count() const {
    std::size_t n = 0;
    for (auto& nt : named_tensors())
        if (nt.t->requires_grad) n += nt.t->numel();
    return n;
}

double LvlmModel::trainable_ratio() const {
    return static_cast<double>(trainable_param_count()) /
           static_cast<double>(countable_param_count());
}

std::unique_ptr<LvlmModel> LvlmModel::clone(Ablation ablation) const {
    LvlmConfig cfg = cfg_;
    cfg.ablation = ablation;
    auto copy = std::make_unique<LvlmModel>(cfg, 0);
    auto src = named_tensors();
    auto dst = copy->named_tensors();
    for (std::size_t i = 0; i < src.size(); ++i) dst[i].t->data = src[i].t->data;
    copy->set_freeze_mode(mode_);
    return copy;
}

void LvlmModel::reinit_ssm(std::uint64_t seed) {
    Rng root(seed);
    for (auto& w : layers_) {
        w.ssm = init_stable(root.next(), cfg_.state_size, cfg_.d_model, cfg_.d_visual,
                            cfg_.ssm_scale);
    }
    set_freeze_mode(mode_);
}

void LvlmModel::enforce_ssm_stability() {
    for (auto& w : layers_) enforce_stability(w.ssm);
}

}  // namespace ssmi
