#pragma once

#include <cmath>
#include <cstdint>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "trajkit/binio.hpp"
#include "trajkit/errors.hpp"
#include "trajkit/features.hpp"
#include "trajkit/numgrad.hpp"
#include "trajkit/types.hpp"

// The Transformer encoder-decoder: sinusoidal positional encoding, input
// embedding of 2- or 3-component feature vectors, multi-head attention with
// post-norm residuals, and greedy autoregressive inference back to world
// coordinates. Graphs are built on a Tape per forward pass; parameters are
// read-shared and bound as reference leaves.

namespace trajkit {

enum class PeMode : std::uint8_t { additive, concat };

inline std::string_view to_string(PeMode m) { return m == PeMode::additive ? "additive" : "concat"; }

inline PeMode pe_mode_from_string(std::string_view s) {
    if (s == "additive") return PeMode::additive;
    if (s == "concat") return PeMode::concat;
    throw ConfigError("unknown pe_mode: " + std::string(s));
}

struct ModelConfig {
    int d_model = 512;
    int n_layers = 6;
    int n_heads = 8;
    int d_ff = 0; // 0 means the 4 x d_model default
    int feature_dim = 2;
    PeMode pe_mode = PeMode::additive;
    double dropout = 0.0;
    int max_len = 64;

    int head_dim() const { return d_model / n_heads; }
    int ff_dim() const { return d_ff > 0 ? d_ff : 4 * d_model; }
    // In concat mode the embedding and the positional encoding each take
    // half of d_model so their column-wise join is exactly d_model wide.
    int embed_dim() const { return pe_mode == PeMode::concat ? d_model / 2 : d_model; }
    int pe_dim() const { return pe_mode == PeMode::concat ? d_model / 2 : d_model; }

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

inline void check_model_config(const ModelConfig& cfg) {
    if (cfg.d_model <= 0 || cfg.n_layers <= 0 || cfg.n_heads <= 0) {
        throw ConfigError("model: d_model, n_layers, n_heads must be positive");
    }
    if (cfg.d_model % cfg.n_heads != 0) throw ConfigError("model: d_model must be divisible by n_heads");
    if (cfg.feature_dim != 2 && cfg.feature_dim != 3) throw ConfigError("model: feature_dim must be 2 or 3");
    if (cfg.pe_mode == PeMode::concat && cfg.d_model % 2 != 0) {
        throw ConfigError("model: concat positional mode needs an even d_model");
    }
    if (cfg.pe_dim() % 2 != 0) throw ConfigError("model: positional encoding width must be even");
    if (!(cfg.dropout >= 0.0 && cfg.dropout < 1.0)) throw ConfigError("model: dropout must be in [0,1)");
    if (cfg.max_len < 2) throw ConfigError("model: max_len must be >= 2");
}

// ---------------------------------------------------------------------------
// Parameters

template <typename T>
struct AttentionParamsT {
    T wq, bq, wk, bk, wv, bv, wo, bo;
};

template <typename T>
struct EncoderLayerT {
    AttentionParamsT<T> self_attn;
    T ln1_g, ln1_b;
    T ff_w1, ff_b1, ff_w2, ff_b2;
    T ln2_g, ln2_b;
};

template <typename T>
struct DecoderLayerT {
    AttentionParamsT<T> self_attn;
    T ln1_g, ln1_b;
    AttentionParamsT<T> cross_attn;
    T ln2_g, ln2_b;
    T ff_w1, ff_b1, ff_w2, ff_b2;
    T ln3_g, ln3_b;
};

template <typename T>
struct ModelParamsT {
    T enc_embed_w, enc_embed_b;
    T dec_embed_w, dec_embed_b;
    std::vector<EncoderLayerT<T>> encoder;
    std::vector<DecoderLayerT<T>> decoder;
    T out_w, out_b;
};

using ModelParams = ModelParamsT<Matrix>;
using ModelIds = ModelParamsT<Tape::Id>;

namespace detail {

template <typename A, typename F>
void visit_attention(A& a, const std::string& prefix, F&& f) {
    f(prefix + ".wq", a.wq);
    f(prefix + ".bq", a.bq);
    f(prefix + ".wk", a.wk);
    f(prefix + ".bk", a.bk);
    f(prefix + ".wv", a.wv);
    f(prefix + ".bv", a.bv);
    f(prefix + ".wo", a.wo);
    f(prefix + ".bo", a.bo);
}

} // namespace detail

// Visits every parameter tensor in a stable order with a stable name;
// the same order backs the optimizer, the checkpoint format and binding.
template <typename P, typename F>
void visit_params(P& p, F&& f) {
    f("enc_embed.w", p.enc_embed_w);
    f("enc_embed.b", p.enc_embed_b);
    f("dec_embed.w", p.dec_embed_w);
    f("dec_embed.b", p.dec_embed_b);
    for (std::size_t i = 0; i < p.encoder.size(); ++i) {
        const std::string prefix = "enc." + std::to_string(i);
        auto& layer = p.encoder[i];
        detail::visit_attention(layer.self_attn, prefix + ".self", f);
        f(prefix + ".ln1.g", layer.ln1_g);
        f(prefix + ".ln1.b", layer.ln1_b);
        f(prefix + ".ff.w1", layer.ff_w1);
        f(prefix + ".ff.b1", layer.ff_b1);
        f(prefix + ".ff.w2", layer.ff_w2);
        f(prefix + ".ff.b2", layer.ff_b2);
        f(prefix + ".ln2.g", layer.ln2_g);
        f(prefix + ".ln2.b", layer.ln2_b);
    }
    for (std::size_t i = 0; i < p.decoder.size(); ++i) {
        const std::string prefix = "dec." + std::to_string(i);
        auto& layer = p.decoder[i];
        detail::visit_attention(layer.self_attn, prefix + ".self", f);
        f(prefix + ".ln1.g", layer.ln1_g);
        f(prefix + ".ln1.b", layer.ln1_b);
        detail::visit_attention(layer.cross_attn, prefix + ".cross", f);
        f(prefix + ".ln2.g", layer.ln2_g);
        f(prefix + ".ln2.b", layer.ln2_b);
        f(prefix + ".ff.w1", layer.ff_w1);
        f(prefix + ".ff.b1", layer.ff_b1);
        f(prefix + ".ff.w2", layer.ff_w2);
        f(prefix + ".ff.b2", layer.ff_b2);
        f(prefix + ".ln3.g", layer.ln3_g);
        f(prefix + ".ln3.b", layer.ln3_b);
    }
    f("out.w", p.out_w);
    f("out.b", p.out_b);
}

inline std::vector<Matrix*> param_tensors(ModelParams& p) {
    std::vector<Matrix*> out;
    visit_params(p, [&](const std::string&, Matrix& m) { out.push_back(&m); });
    return out;
}

inline std::vector<const Matrix*> param_tensors(const ModelParams& p) {
    std::vector<const Matrix*> out;
    visit_params(p, [&](const std::string&, const Matrix& m) { out.push_back(&m); });
    return out;
}

inline std::vector<std::string> param_names(const ModelParams& p) {
    std::vector<std::string> out;
    visit_params(p, [&](const std::string& name, const Matrix&) { out.push_back(name); });
    return out;
}

namespace detail {

inline Matrix xavier(int fan_in, int fan_out, Rng& rng) {
    Matrix m(fan_in, fan_out);
    const double sd = std::sqrt(2.0 / (fan_in + fan_out));
    for (double& v : m.data) v = rng.gaussian(0.0, sd);
    return m;
}

inline AttentionParamsT<Matrix> init_attention(int d_model, Rng& rng) {
    AttentionParamsT<Matrix> a;
    a.wq = xavier(d_model, d_model, rng);
    a.bq = Matrix(1, d_model);
    a.wk = xavier(d_model, d_model, rng);
    a.bk = Matrix(1, d_model);
    a.wv = xavier(d_model, d_model, rng);
    a.bv = Matrix(1, d_model);
    a.wo = xavier(d_model, d_model, rng);
    a.bo = Matrix(1, d_model);
    return a;
}

} // namespace detail

inline ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed) {
    check_model_config(cfg);
    Rng rng(seed);
    const int d = cfg.d_model;
    const int ew = cfg.embed_dim();
    const int ff = cfg.ff_dim();

    ModelParams p;
    p.enc_embed_w = detail::xavier(cfg.feature_dim, ew, rng);
    p.enc_embed_b = Matrix(1, ew);
    p.dec_embed_w = detail::xavier(cfg.feature_dim, ew, rng);
    p.dec_embed_b = Matrix(1, ew);
    p.encoder.resize(static_cast<std::size_t>(cfg.n_layers));
    for (auto& layer : p.encoder) {
        layer.self_attn = detail::init_attention(d, rng);
        layer.ln1_g = Matrix::filled(1, d, 1.0);
        layer.ln1_b = Matrix(1, d);
        layer.ff_w1 = detail::xavier(d, ff, rng);
        layer.ff_b1 = Matrix(1, ff);
        layer.ff_w2 = detail::xavier(ff, d, rng);
        layer.ff_b2 = Matrix(1, d);
        layer.ln2_g = Matrix::filled(1, d, 1.0);
        layer.ln2_b = Matrix(1, d);
    }
    p.decoder.resize(static_cast<std::size_t>(cfg.n_layers));
    for (auto& layer : p.decoder) {
        layer.self_attn = detail::init_attention(d, rng);
        layer.ln1_g = Matrix::filled(1, d, 1.0);
        layer.ln1_b = Matrix(1, d);
        layer.cross_attn = detail::init_attention(d, rng);
        layer.ln2_g = Matrix::filled(1, d, 1.0);
        layer.ln2_b = Matrix(1, d);
        layer.ff_w1 = detail::xavier(d, ff, rng);
        layer.ff_b1 = Matrix(1, ff);
        layer.ff_w2 = detail::xavier(ff, d, rng);
        layer.ff_b2 = Matrix(1, d);
        layer.ln3_g = Matrix::filled(1, d, 1.0);
        layer.ln3_b = Matrix(1, d);
    }
    p.out_w = detail::xavier(d, cfg.feature_dim, rng);
    p.out_b = Matrix(1, cfg.feature_dim);
    return p;
}

inline ModelIds bind_params(Tape& tape, const ModelParams& p) {
    std::vector<Tape::Id> flat;
    visit_params(p, [&](const std::string&, const Matrix& m) { flat.push_back(tape.input_ref(&m)); });
    ModelIds ids;
    ids.encoder.resize(p.encoder.size());
    ids.decoder.resize(p.decoder.size());
    std::size_t k = 0;
    visit_params(ids, [&](const std::string&, Tape::Id& id) { id = flat[k++]; });
    return ids;
}

// Reads the per-parameter gradients accumulated by Tape::backward, in the
// same stable order as param_tensors.
inline std::vector<Matrix> read_gradients(const Tape& tape, const ModelIds& ids) {
    std::vector<Matrix> out;
    visit_params(const_cast<ModelIds&>(ids), [&](const std::string&, Tape::Id& id) { out.push_back(tape.grad(id)); });
    return out;
}

// ---------------------------------------------------------------------------
// Positional encoding

// PE[p, 2i] = sin(p / 10000^(2i/d)), PE[p, 2i+1] = cos(p / 10000^(2i/d)).
// Positions may be non-contiguous: a missing step simply skips its row, and
// each emitted row depends only on its own position value.
inline Matrix positional_encoding(const std::vector<std::int64_t>& positions, int d) {
    if (d <= 0 || d % 2 != 0) throw ConfigError("positional_encoding: width must be positive and even");
    Matrix pe(static_cast<int>(positions.size()), d);
    for (std::size_t r = 0; r < positions.size(); ++r) {
        const double p = static_cast<double>(positions[r]);
        for (int i = 0; i < d / 2; ++i) {
            const double rate = std::pow(10000.0, (2.0 * i) / d);
            pe(static_cast<int>(r), 2 * i) = std::sin(p / rate);
            pe(static_cast<int>(r), 2 * i + 1) = std::cos(p / rate);
        }
    }
    return pe;
}

inline std::vector<std::int64_t> iota_positions(int n) {
    std::vector<std::int64_t> out(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = i;
    return out;
}

// Additive attention mask: 0 where attending is allowed, a large negative
// number where blocked (softmax then underflows those weights to exact 0).
inline Matrix causal_mask(int n) {
    Matrix m(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) m(i, j) = -1e9;
    return m;
}

inline Matrix mask_from_bool(const std::vector<std::vector<bool>>& allowed) {
    const int rows = static_cast<int>(allowed.size());
    const int cols = rows > 0 ? static_cast<int>(allowed[0].size()) : 0;
    Matrix m(rows, cols);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) m(i, j) = allowed[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] ? 0.0 : -1e9;
    return m;
}

// ---------------------------------------------------------------------------
// Graph builders

inline Matrix to_matrix(const std::vector<FeatureVec>& seq, int feature_dim) {
    Matrix m(static_cast<int>(seq.size()), feature_dim);
    for (std::size_t i = 0; i < seq.size(); ++i)
        for (int d = 0; d < feature_dim; ++d) m(static_cast<int>(i), d) = seq[i].component(d);
    return m;
}

inline std::vector<FeatureVec> from_matrix(const Matrix& m) {
    std::vector<FeatureVec> out(static_cast<std::size_t>(m.rows));
    for (int i = 0; i < m.rows; ++i)
        for (int d = 0; d < m.cols && d < 3; ++d) out[static_cast<std::size_t>(i)].set_component(d, m(i, d));
    return out;
}

namespace detail {

struct EmbedIds {
    Tape::Id w, b;
};

// Linear projection of the normalized features, scaled by sqrt(width),
// then combined with the positional encoding (added or concatenated).
inline Tape::Id embed_graph(Tape& t, const ModelConfig& cfg, Tape::Id features, EmbedIds e,
                            const std::vector<std::int64_t>& positions) {
    Tape::Id proj = t.add_row(t.matmul(features, e.w), e.b);
    proj = t.scale(proj, std::sqrt(static_cast<double>(cfg.embed_dim())));
    const Matrix pe = positional_encoding(positions, cfg.pe_dim());
    if (cfg.pe_mode == PeMode::additive) {
        return t.add_const(proj, pe);
    }
    return t.concat_cols(proj, t.input(pe));
}

template <typename Ids>
Tape::Id attention_graph(Tape& t, const ModelConfig& cfg, Tape::Id q_in, Tape::Id kv_in,
                         const Matrix* mask, const Ids& a) {
    Tape::Id q = t.add_row(t.matmul(q_in, a.wq), a.bq);
    Tape::Id k = t.add_row(t.matmul(kv_in, a.wk), a.bk);
    Tape::Id v = t.add_row(t.matmul(kv_in, a.wv), a.bv);
    const int dh = cfg.head_dim();
    Tape::Id joined = -1;
    for (int h = 0; h < cfg.n_heads; ++h) {
        Tape::Id qh = t.select_cols(q, h * dh, dh);
        Tape::Id kh = t.select_cols(k, h * dh, dh);
        Tape::Id vh = t.select_cols(v, h * dh, dh);
        Tape::Id scores = t.scale(t.matmul(qh, t.transpose(kh)), 1.0 / std::sqrt(static_cast<double>(dh)));
        if (mask != nullptr) scores = t.add_const(scores, *mask);
        Tape::Id probs = t.softmax_rows(scores);
        Tape::Id head = t.matmul(probs, vh);
        joined = (h == 0) ? head : t.concat_cols(joined, head);
    }
    return t.add_row(t.matmul(joined, a.wo), a.bo);
}

template <typename L>
Tape::Id feed_forward_graph(Tape& t, Tape::Id x, const L& layer) {
    Tape::Id h = t.relu(t.add_row(t.matmul(x, layer.ff_w1), layer.ff_b1));
    return t.add_row(t.matmul(h, layer.ff_w2), layer.ff_b2);
}

inline Tape::Id maybe_dropout(Tape& t, Tape::Id x, const ModelConfig& cfg, Rng* rng) {
    if (cfg.dropout > 0.0 && rng != nullptr) return t.dropout(x, cfg.dropout, *rng);
    return x;
}

} // namespace detail

// Encoder stack over the embedded observation sequence; post-norm residuals.
inline Tape::Id encode_graph(Tape& t, const ModelIds& ids, const ModelConfig& cfg, Tape::Id obs_features,
                             const std::vector<std::int64_t>& positions, Rng* dropout_rng = nullptr) {
    Tape::Id x = detail::embed_graph(t, cfg, obs_features, {ids.enc_embed_w, ids.enc_embed_b}, positions);
    x = detail::maybe_dropout(t, x, cfg, dropout_rng);
    for (const auto& layer : ids.encoder) {
        Tape::Id attn = detail::attention_graph(t, cfg, x, x, nullptr, layer.self_attn);
        attn = detail::maybe_dropout(t, attn, cfg, dropout_rng);
        x = t.layer_norm_rows(t.add(x, attn), layer.ln1_g, layer.ln1_b);
        Tape::Id ff = detail::feed_forward_graph(t, x, layer);
        ff = detail::maybe_dropout(t, ff, cfg, dropout_rng);
        x = t.layer_norm_rows(t.add(x, ff), layer.ln2_g, layer.ln2_b);
    }
    return x;
}

// Decoder stack: causal self-attention, cross-attention over the encoder
// memory, feed-forward; then the linear projection back to feature space.
inline Tape::Id decode_graph(Tape& t, const ModelIds& ids, const ModelConfig& cfg, Tape::Id dec_features,
                             Tape::Id memory, const std::vector<std::int64_t>& positions,
                             Rng* dropout_rng = nullptr) {
    const Matrix causal = causal_mask(static_cast<int>(positions.size()));
    Tape::Id x = detail::embed_graph(t, cfg, dec_features, {ids.dec_embed_w, ids.dec_embed_b}, positions);
    x = detail::maybe_dropout(t, x, cfg, dropout_rng);
    for (const auto& layer : ids.decoder) {
        Tape::Id self = detail::attention_graph(t, cfg, x, x, &causal, layer.self_attn);
        self = detail::maybe_dropout(t, self, cfg, dropout_rng);
        x = t.layer_norm_rows(t.add(x, self), layer.ln1_g, layer.ln1_b);
        Tape::Id cross = detail::attention_graph(t, cfg, x, memory, nullptr, layer.cross_attn);
        cross = detail::maybe_dropout(t, cross, cfg, dropout_rng);
        x = t.layer_norm_rows(t.add(x, cross), layer.ln2_g, layer.ln2_b);
        Tape::Id ff = detail::feed_forward_graph(t, x, layer);
        ff = detail::maybe_dropout(t, ff, cfg, dropout_rng);
        x = t.layer_norm_rows(t.add(x, ff), layer.ln3_g, layer.ln3_b);
    }
    return t.add_row(t.matmul(x, ids.out_w), ids.out_b);
}

// Teacher-forced training loss: decoder input is the target shifted right
// behind a zero start token, supervision is the full target, loss is the
// mean squared residual in normalized feature space.
inline Tape::Id training_loss_graph(Tape& t, const ModelIds& ids, const ModelConfig& cfg,
                                    const Matrix& obs_norm, const Matrix& target_norm,
                                    Rng* dropout_rng = nullptr) {
    if (obs_norm.cols != cfg.feature_dim || target_norm.cols != cfg.feature_dim) {
        throw ShapeError("training_loss_graph: feature dimension mismatch");
    }
    Matrix dec_in(target_norm.rows, target_norm.cols);
    for (int i = 1; i < target_norm.rows; ++i)
        for (int j = 0; j < target_norm.cols; ++j) dec_in(i, j) = target_norm(i - 1, j);

    Tape::Id obs = t.input(obs_norm);
    Tape::Id memory = encode_graph(t, ids, cfg, obs, iota_positions(obs_norm.rows), dropout_rng);
    Tape::Id out = decode_graph(t, ids, cfg, t.input(dec_in), memory, iota_positions(dec_in.rows), dropout_rng);
    return t.mean_sq_diff(out, target_norm);
}

// ---------------------------------------------------------------------------
// Inference

struct Point {
    double x = 0.0;
    double y = 0.0;

    friend bool operator==(const Point&, const Point&) = default;
};

// Integrates velocity-space features into absolute positions.
inline std::vector<Point> velocities_to_positions(const std::vector<FeatureVec>& feats, double dt,
                                                  double x0, double y0) {
    std::vector<Point> out;
    out.reserve(feats.size());
    double x = x0;
    double y = y0;
    for (const FeatureVec& f : feats) {
        x += f.dvx * dt;
        y += f.dvy * dt;
        out.push_back({x, y});
    }
    return out;
}

// Greedy autoregressive decoding of one raw window: normalize, encode once,
// feed each predicted step back as the next decoder input, then denormalize
// and cumulatively sum the velocity outputs from the last observed position.
inline std::vector<FeatureVec> predict_features(const ModelConfig& cfg, const ModelParams& params,
                                                const WindowSample& window, const NormStats& stats,
                                                int pred_len) {
    if (stats.dim() != cfg.feature_dim) throw ShapeError("predict: stats dimension != model feature_dim");
    std::vector<FeatureVec> obs_norm(window.obs.size());
    for (std::size_t i = 0; i < window.obs.size(); ++i) obs_norm[i] = normalize_vec(window.obs[i], stats);
    const Matrix obs = to_matrix(obs_norm, cfg.feature_dim);

    Matrix memory;
    {
        Tape t;
        const ModelIds ids = bind_params(t, params);
        memory = t.value(encode_graph(t, ids, cfg, t.input(obs), iota_positions(obs.rows)));
    }

    Matrix dec_in(1, cfg.feature_dim); // zero start token in normalized space
    std::vector<FeatureVec> out_norm;
    for (int step = 0; step < pred_len; ++step) {
        Tape t;
        const ModelIds ids = bind_params(t, params);
        Tape::Id y = decode_graph(t, ids, cfg, t.input(dec_in), t.input(memory), iota_positions(dec_in.rows));
        const Matrix& yv = t.value(y);
        FeatureVec next;
        for (int d = 0; d < cfg.feature_dim; ++d) next.set_component(d, yv(yv.rows - 1, d));
        out_norm.push_back(next);
        Matrix grown(dec_in.rows + 1, cfg.feature_dim);
        for (int i = 0; i < dec_in.rows; ++i)
            for (int j = 0; j < cfg.feature_dim; ++j) grown(i, j) = dec_in(i, j);
        for (int d = 0; d < cfg.feature_dim; ++d) grown(dec_in.rows, d) = next.component(d);
        dec_in = std::move(grown);
    }

    std::vector<FeatureVec> out(out_norm.size());
    for (std::size_t i = 0; i < out_norm.size(); ++i) out[i] = denormalize_vec(out_norm[i], stats);
    return out;
}

inline std::vector<Point> predict(const ModelConfig& cfg, const ModelParams& params,
                                  const WindowSample& window, const NormStats& stats, int pred_len) {
    const std::vector<FeatureVec> feats = predict_features(cfg, params, window, stats, pred_len);
    return velocities_to_positions(feats, window.dt, window.last_obs_x, window.last_obs_y);
}

// ---------------------------------------------------------------------------
// Checkpoint (.ckpt): config + parameters + normalization stats, so
// inference is self-contained.

struct Checkpoint {
    ModelConfig cfg;
    ModelParams params;
    NormStats stats;
};

namespace detail {

constexpr std::uint32_t ckpt_version = 1;

} // namespace detail

inline void write_checkpoint(const Checkpoint& ck, std::ostream& out) {
    binio::Writer w(out);
    w.magic("TCKP");
    w.u32(detail::ckpt_version);
    w.u32(static_cast<std::uint32_t>(ck.cfg.d_model));
    w.u32(static_cast<std::uint32_t>(ck.cfg.n_layers));
    w.u32(static_cast<std::uint32_t>(ck.cfg.n_heads));
    w.u32(static_cast<std::uint32_t>(ck.cfg.d_ff));
    w.u32(static_cast<std::uint32_t>(ck.cfg.feature_dim));
    w.u8(static_cast<std::uint8_t>(ck.cfg.pe_mode));
    w.f64(ck.cfg.dropout);
    w.u32(static_cast<std::uint32_t>(ck.cfg.max_len));
    w.f64_vec(ck.stats.mean);
    w.f64_vec(ck.stats.sd);
    std::uint64_t count = 0;
    visit_params(const_cast<ModelParams&>(ck.params), [&](const std::string&, Matrix&) { ++count; });
    w.u64(count);
    visit_params(const_cast<ModelParams&>(ck.params), [&](const std::string& name, Matrix& m) {
        w.str(name);
        w.u32(static_cast<std::uint32_t>(m.rows));
        w.u32(static_cast<std::uint32_t>(m.cols));
        w.f64_vec(m.data);
    });
    if (!w.ok()) throw DataError("checkpoint write failed");
}

inline Checkpoint read_checkpoint(std::istream& in) {
    binio::Reader r(in);
    r.expect_magic("TCKP");
    const std::uint32_t version = r.u32();
    if (version != detail::ckpt_version) {
        throw VersionMismatch("checkpoint version " + std::to_string(version) + " (this build reads version " +
                              std::to_string(detail::ckpt_version) + ")");
    }
    Checkpoint ck;
    ck.cfg.d_model = static_cast<int>(r.u32());
    ck.cfg.n_layers = static_cast<int>(r.u32());
    ck.cfg.n_heads = static_cast<int>(r.u32());
    ck.cfg.d_ff = static_cast<int>(r.u32());
    ck.cfg.feature_dim = static_cast<int>(r.u32());
    ck.cfg.pe_mode = static_cast<PeMode>(r.u8());
    ck.cfg.dropout = r.f64();
    ck.cfg.max_len = static_cast<int>(r.u32());
    check_model_config(ck.cfg);
    ck.stats.mean = r.f64_vec(1u << 8);
    ck.stats.sd = r.f64_vec(1u << 8);

    ck.params = init_params(ck.cfg, 0); // skeleton with the right shapes
    const std::uint64_t count = r.u64();
    std::uint64_t seen = 0;
    visit_params(ck.params, [&](const std::string& name, Matrix& m) {
        const std::string got = r.str();
        if (got != name) throw CorruptFile("checkpoint tensor order mismatch: expected " + name + ", got " + got);
        const int rows = static_cast<int>(r.u32());
        const int cols = static_cast<int>(r.u32());
        if (rows != m.rows || cols != m.cols) {
            throw CorruptFile("checkpoint tensor " + name + " has unexpected shape");
        }
        m.data = r.f64_vec();
        if (m.data.size() != static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols)) {
            throw CorruptFile("checkpoint tensor " + name + " has wrong element count");
        }
        ++seen;
    });
    if (seen != count) throw CorruptFile("checkpoint tensor count mismatch");
    return ck;
}

inline void write_checkpoint_file(const Checkpoint& ck, const std::string& path) {
    auto out = binio::open_output(path);
    write_checkpoint(ck, out);
}

inline Checkpoint read_checkpoint_file(const std::string& path) {
    auto in = binio::open_input(path);
    return read_checkpoint(in);
}

} // namespace trajkit
