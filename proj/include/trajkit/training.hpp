#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <thread>
#include <vector>

#include "trajkit/errors.hpp"
#include "trajkit/features.hpp"
#include "trajkit/model.hpp"
#include "trajkit/numgrad.hpp"

// Teacher-forced training: L2 loss over normalized increments (plus heading
// when oriented), a linear-warmup inverse-square-root learning-rate schedule
// and Adam-style adaptive moments. Every run is fully seeded; the same seed
// reproduces the per-epoch loss trace bitwise.

namespace trajkit {

struct TrainConfig {
    int epochs = 100;
    int batch_size = 32;
    int warmup_epochs = 10;
    double base_scale = 1.0; // multiplier on the schedule's peak
    std::uint64_t seed = 1;
    bool clip_gradients = true;
    double clip_norm = 1.0;
    int workers = 1;

    friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

inline void check_train_config(const TrainConfig& cfg) {
    if (cfg.epochs < 1) throw ConfigError("train: epochs must be >= 1");
    if (cfg.batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
    if (cfg.warmup_epochs < 1) throw ConfigError("train: warmup_epochs must be >= 1");
    if (cfg.workers < 1) throw ConfigError("train: workers must be >= 1");
    if (!(cfg.base_scale > 0.0)) throw ConfigError("train: base_scale must be positive");
}

struct TrainReport {
    std::vector<double> epoch_loss; // mean teacher-forced loss per epoch
    std::vector<double> lr_trace;   // learning rate at every optimizer step
    double wall_seconds = 0.0;
};

// ---------------------------------------------------------------------------
// Loss

// Mean over all steps and feature components of the squared residual.
inline double l2_loss(const Matrix& pred, const Matrix& target) {
    if (!pred.same_shape(target)) throw ShapeError("l2_loss: shapes differ");
    double sum = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = pred.data[i] - target.data[i];
        sum += d * d;
    }
    return sum / static_cast<double>(pred.size());
}

// Teacher-forced loss of one raw window; fills per-parameter gradients when
// grads != nullptr. This is the scalar objective the gradient checker sees.
inline double window_loss(const ModelConfig& cfg, const ModelParams& params, const WindowSample& raw,
                          const NormStats& stats, std::vector<Matrix>* grads,
                          Rng* dropout_rng = nullptr) {
    const WindowSample n = normalize(raw, stats);
    const Matrix obs = to_matrix(n.obs, cfg.feature_dim);
    const Matrix target = to_matrix(n.target, cfg.feature_dim);
    Tape tape;
    const ModelIds ids = bind_params(tape, params);
    const Tape::Id loss = training_loss_graph(tape, ids, cfg, obs, target, dropout_rng);
    const double value = tape.value(loss)(0, 0);
    if (grads != nullptr) {
        tape.backward(loss);
        *grads = read_gradients(tape, ids);
    }
    return value;
}

// ---------------------------------------------------------------------------
// Learning-rate schedule

// lr = base_scale * d_model^-0.5 * min(step^-0.5, step * W^-1.5) with
// W = warmup_epochs * steps_per_epoch: linear warmup to the peak at step W,
// inverse-square-root decay afterwards.
inline double learning_rate(long step, long steps_per_epoch, const TrainConfig& cfg, int d_model) {
    if (step < 1) throw ConfigError("learning_rate: step must be >= 1");
    const double w = static_cast<double>(cfg.warmup_epochs) * static_cast<double>(steps_per_epoch);
    const double s = static_cast<double>(step);
    return cfg.base_scale * std::pow(static_cast<double>(d_model), -0.5) *
           std::min(1.0 / std::sqrt(s), s * std::pow(w, -1.5));
}

// ---------------------------------------------------------------------------
// Optimizer

// Adam with beta1=0.9, beta2=0.98, eps=1e-9 and bias correction. A step with
// lr = 0 leaves every parameter bitwise unchanged.
class AdamOptimizer {
public:
    explicit AdamOptimizer(const std::vector<Matrix*>& params) {
        m_.reserve(params.size());
        v_.reserve(params.size());
        for (const Matrix* p : params) {
            m_.emplace_back(p->rows, p->cols);
            v_.emplace_back(p->rows, p->cols);
        }
    }

    void step(const std::vector<Matrix*>& params, const std::vector<Matrix>& grads, double lr) {
        if (params.size() != m_.size() || grads.size() != m_.size()) {
            throw ShapeError("adam: parameter/gradient count mismatch");
        }
        ++t_;
        const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
        for (std::size_t i = 0; i < params.size(); ++i) {
            Matrix& p = *params[i];
            const Matrix& g = grads[i];
            for (std::size_t j = 0; j < p.size(); ++j) {
                m_[i].data[j] = beta1_ * m_[i].data[j] + (1.0 - beta1_) * g.data[j];
                v_[i].data[j] = beta2_ * v_[i].data[j] + (1.0 - beta2_) * g.data[j] * g.data[j];
                const double mhat = m_[i].data[j] / bc1;
                const double vhat = v_[i].data[j] / bc2;
                p.data[j] -= lr * mhat / (std::sqrt(vhat) + eps_);
            }
        }
    }

private:
    double beta1_ = 0.9;
    double beta2_ = 0.98;
    double eps_ = 1e-9;
    long t_ = 0;
    std::vector<Matrix> m_;
    std::vector<Matrix> v_;
};

// Scales gradients in place so their global L2 norm is at most max_norm.
inline void clip_global_norm(std::vector<Matrix>& grads, double max_norm) {
    double sq = 0.0;
    for (const Matrix& g : grads)
        for (double v : g.data) sq += v * v;
    const double norm = std::sqrt(sq);
    if (norm > max_norm && norm > 0.0) {
        const double s = max_norm / norm;
        for (Matrix& g : grads)
            for (double& v : g.data) v *= s;
    }
}

// ---------------------------------------------------------------------------
// Batch gradient

namespace detail {

inline void add_into(std::vector<Matrix>& acc, const std::vector<Matrix>& inc) {
    if (acc.empty()) {
        acc = inc;
        return;
    }
    for (std::size_t i = 0; i < acc.size(); ++i)
        for (std::size_t j = 0; j < acc[i].size(); ++j) acc[i].data[j] += inc[i].data[j];
}

// Mean loss and mean gradient over one batch. Workers each take one
// contiguous chunk and the chunk partials are reduced in chunk order, so a
// fixed worker count reproduces bitwise and different worker counts agree
// to rounding error.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt);

inline double batch_gradient(const ModelConfig& cfg, const ModelParams& params,
                             const std::vector<WindowSample>& windows,
                             const std::vector<std::size_t>& batch, const NormStats& stats,
                             int workers, std::uint64_t dropout_seed, std::vector<Matrix>& grad_out) {
    const std::size_t n = batch.size();
    const int used = std::max(1, std::min<int>(workers, static_cast<int>(n)));

    std::vector<std::vector<Matrix>> partial_grads(static_cast<std::size_t>(used));
    std::vector<double> partial_loss(static_cast<std::size_t>(used), 0.0);

    auto run_chunk = [&](int w) {
        const std::size_t lo = n * static_cast<std::size_t>(w) / static_cast<std::size_t>(used);
        const std::size_t hi = n * static_cast<std::size_t>(w + 1) / static_cast<std::size_t>(used);
        std::vector<Matrix> grads;
        for (std::size_t i = lo; i < hi; ++i) {
            // dropout noise is seeded by batch position, not worker, so the
            // realized masks do not depend on the worker count
            Rng dropout_rng(mix_seed(dropout_seed, i));
            Rng* rng = cfg.dropout > 0.0 ? &dropout_rng : nullptr;
            partial_loss[static_cast<std::size_t>(w)] +=
                window_loss(cfg, params, windows[batch[i]], stats, &grads, rng);
            add_into(partial_grads[static_cast<std::size_t>(w)], grads);
        }
    };

    if (used == 1) {
        run_chunk(0);
    } else {
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(used));
        for (int w = 0; w < used; ++w) pool.emplace_back(run_chunk, w);
        for (std::thread& t : pool) t.join();
    }

    grad_out.clear();
    double loss = 0.0;
    for (int w = 0; w < used; ++w) {
        add_into(grad_out, partial_grads[static_cast<std::size_t>(w)]);
        loss += partial_loss[static_cast<std::size_t>(w)];
    }
    const double inv = 1.0 / static_cast<double>(n);
    for (Matrix& g : grad_out)
        for (double& v : g.data) v *= inv;
    return loss * inv;
}

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (salt + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

} // namespace detail

// ---------------------------------------------------------------------------
// Training loop

struct TrainResult {
    ModelParams params;
    TrainReport report;
};

inline TrainResult train(const WindowSet& ws, const ModelConfig& model_cfg, const TrainConfig& train_cfg) {
    check_model_config(model_cfg);
    check_train_config(train_cfg);
    if (ws.train.empty()) throw DataError("empty train set");
    if (ws.stats.dim() != model_cfg.feature_dim) {
        throw ShapeError("train: stats dimension != model feature_dim");
    }
    if (ws.cfg.obs_len > model_cfg.max_len || ws.cfg.pred_len > model_cfg.max_len) {
        throw ConfigError("train: window lengths exceed model max_len");
    }

    const auto t0 = std::chrono::steady_clock::now();
    TrainResult res;
    res.params = init_params(model_cfg, train_cfg.seed);
    std::vector<Matrix*> tensors = param_tensors(res.params);
    AdamOptimizer adam(tensors);

    const std::size_t n = ws.train.size();
    const long steps_per_epoch = static_cast<long>((n + static_cast<std::size_t>(train_cfg.batch_size) - 1) /
                                                   static_cast<std::size_t>(train_cfg.batch_size));
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);

    long global_step = 0;
    std::vector<Matrix> grads;
    for (int epoch = 0; epoch < train_cfg.epochs; ++epoch) {
        Rng shuffle_rng(detail::mix_seed(train_cfg.seed, static_cast<std::uint64_t>(epoch)));
        shuffle_rng.shuffle(order);

        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(train_cfg.batch_size)) {
            const std::size_t end = std::min(n, start + static_cast<std::size_t>(train_cfg.batch_size));
            const std::vector<std::size_t> batch(order.begin() + static_cast<std::ptrdiff_t>(start),
                                                 order.begin() + static_cast<std::ptrdiff_t>(end));
            ++global_step;
            const double lr = learning_rate(global_step, steps_per_epoch, train_cfg, model_cfg.d_model);
            res.report.lr_trace.push_back(lr);

            const double batch_loss = detail::batch_gradient(
                model_cfg, res.params, ws.train, batch, ws.stats, train_cfg.workers,
                detail::mix_seed(train_cfg.seed, 0xD05Eull + static_cast<std::uint64_t>(global_step)), grads);
            if (!std::isfinite(batch_loss)) {
                throw TrainDivergence("training loss diverged at epoch " + std::to_string(epoch));
            }
            epoch_loss += batch_loss * static_cast<double>(batch.size());

            if (train_cfg.clip_gradients) clip_global_norm(grads, train_cfg.clip_norm);
            adam.step(tensors, grads, lr);
        }
        res.report.epoch_loss.push_back(epoch_loss / static_cast<double>(n));
    }

    res.report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return res;
}

} // namespace trajkit
