#include "pyguard/neuralnet.hpp"

#include "model_file.hpp"
#include "pyguard/errors.hpp"
#include "rng.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <optional>

namespace pyguard {

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

void validate(const TrainingConfig& c) {
    if (c.embedding_dim == 0 || c.input_layer_units == 0 || c.hidden_units == 0 ||
        c.epochs == 0 || c.batch_size == 0) {
        throw InvalidConfig("unit counts, epochs and batch size must be >= 1");
    }
    if (c.output_units != 1) throw InvalidConfig("only a single output unit is supported");
    if (!(c.dropout_rate >= 0.0 && c.dropout_rate < 1.0)) {
        throw InvalidConfig("dropout_rate must be in [0, 1)");
    }
    if (!(c.learning_rate >= 0.0)) throw InvalidConfig("learning_rate must be >= 0");
    if (c.optimizer != "adam") throw InvalidConfig("unsupported optimizer '" + c.optimizer + "'");
    if (c.loss != "mean_squared_error") throw InvalidConfig("unsupported loss '" + c.loss + "'");
    if (!(c.adam_beta1 >= 0.0 && c.adam_beta1 < 1.0 && c.adam_beta2 >= 0.0 && c.adam_beta2 < 1.0) ||
        !(c.adam_epsilon > 0.0)) {
        throw InvalidConfig("invalid Adam coefficients");
    }
}

namespace {

nlohmann::json config_json(const TrainingConfig& c) {
    return {{"embedding_dim", c.embedding_dim},
            {"input_layer_units", c.input_layer_units},
            {"hidden_layers", c.hidden_layers},
            {"hidden_units", c.hidden_units},
            {"output_units", c.output_units},
            {"optimizer", c.optimizer},
            {"learning_rate", c.learning_rate},
            {"epochs", c.epochs},
            {"batch_size", c.batch_size},
            {"loss", c.loss},
            {"dropout_rate", c.dropout_rate},
            {"adam_beta1", c.adam_beta1},
            {"adam_beta2", c.adam_beta2},
            {"adam_epsilon", c.adam_epsilon},
            {"seed", c.seed}};
}

TrainingConfig config_from(const nlohmann::json& j) {
    TrainingConfig c;
    try {
        auto take = [&j](const char* key, auto& field) {
            if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
        };
        take("embedding_dim", c.embedding_dim);
        take("input_layer_units", c.input_layer_units);
        take("hidden_layers", c.hidden_layers);
        take("hidden_units", c.hidden_units);
        take("output_units", c.output_units);
        take("optimizer", c.optimizer);
        take("learning_rate", c.learning_rate);
        take("epochs", c.epochs);
        take("batch_size", c.batch_size);
        take("loss", c.loss);
        take("dropout_rate", c.dropout_rate);
        take("adam_beta1", c.adam_beta1);
        take("adam_beta2", c.adam_beta2);
        take("adam_epsilon", c.adam_epsilon);
        take("seed", c.seed);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("bad training config: ") + e.what());
    }
    return c;
}

}  // namespace

std::string training_config_to_json(const TrainingConfig& config) {
    return config_json(config).dump();
}

TrainingConfig training_config_from_json(std::string_view json) {
    auto j = nlohmann::json::parse(json, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw FormatError("training config is not a JSON object");
    return config_from(j);
}

// ---------------------------------------------------------------------------
// Layout and model
// ---------------------------------------------------------------------------

ParamLayout::ParamLayout(const TrainingConfig& c) {
    const std::size_t layers = 1 + c.hidden_layers;
    for (std::size_t l = 0; l < layers; ++l) {
        units_.push_back(l == 0 ? c.input_layer_units : c.hidden_units);
        inputs_.push_back(l == 0 ? c.embedding_dim : 2 * units_[l - 1]);
    }
    auto add = [this](std::string name, std::vector<std::size_t> shape) {
        const std::size_t size =
            std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
        slots_.push_back(TensorSlot{std::move(name), std::move(shape), total_, size});
        total_ += size;
    };
    for (std::size_t l = 0; l < layers; ++l) {
        const std::size_t u = units_[l];
        for (const char* dir : {"fwd", "bwd"}) {
            const std::string prefix = "lstm" + std::to_string(l) + "." + dir + ".";
            add(prefix + "W", {4 * u, inputs_[l]});
            add(prefix + "U", {4 * u, u});
            add(prefix + "b", {4 * u});
        }
    }
    add("head.W", {c.output_units, 2 * units_.back()});
    add("head.b", {c.output_units});
}

namespace {

const TensorSlot* find_slot(const ParamLayout& layout, std::string_view name) {
    for (const auto& s : layout.tensors()) {
        if (s.name == name) return &s;
    }
    return nullptr;
}

}  // namespace

std::span<const float> BiLstmModel::tensor(std::string_view name) const {
    const ParamLayout l = layout();
    const TensorSlot* s = find_slot(l, name);
    if (!s) throw NotFound("no tensor named '" + std::string(name) + "'");
    return {params.data() + s->offset, s->size};
}

std::span<float> BiLstmModel::tensor(std::string_view name) {
    const ParamLayout l = layout();
    const TensorSlot* s = find_slot(l, name);
    if (!s) throw NotFound("no tensor named '" + std::string(name) + "'");
    return {params.data() + s->offset, s->size};
}

bool BiLstmModel::operator==(const BiLstmModel& other) const {
    return config == other.config && vuln_type == other.vuln_type &&
           params.size() == other.params.size() &&
           (params.empty() ||
            std::memcmp(params.data(), other.params.data(), params.size() * sizeof(float)) == 0);
}

BiLstmModel init_model(const TrainingConfig& config, VulnType vuln_type) {
    validate(config);
    BiLstmModel m;
    m.config = config;
    m.vuln_type = vuln_type;
    const ParamLayout layout(config);
    m.params.assign(layout.total(), 0.0f);
    detail::Rng rng(config.seed);
    for (const TensorSlot& s : layout.tensors()) {
        if (s.shape.size() != 2) continue;  // biases start at zero
        const double fan_out = static_cast<double>(s.shape[0]);
        const double fan_in = static_cast<double>(s.shape[1]);
        const double limit = std::sqrt(6.0 / (fan_in + fan_out));
        for (std::size_t i = 0; i < s.size; ++i) {
            m.params[s.offset + i] = static_cast<float>(rng.uniform(-limit, limit));
        }
    }
    for (std::size_t l = 0; l < layout.layers(); ++l) {
        const std::size_t u = layout.layer_units(l);
        for (int dir = 0; dir < 2; ++dir) {
            float* bias = m.params.data() + layout.b(l, dir);
            std::fill(bias + u, bias + 2 * u, 1.0f);
        }
    }
    return m;
}

// ---------------------------------------------------------------------------
// Kernels, templated on the scalar so gradient checks can run in double.
// ---------------------------------------------------------------------------

namespace {

template <typename T>
T dot(const T* a, const T* b, std::size_t n) {
    T acc[8] = {};
    std::size_t j = 0;
    for (; j + 8 <= n; j += 8) {
        for (std::size_t k = 0; k < 8; ++k) acc[k] += a[j + k] * b[j + k];
    }
    T s = ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
    for (; j < n; ++j) s += a[j] * b[j];
    return s;
}

template <typename T>
void axpy(T alpha, const T* x, T* y, std::size_t n) {
    for (std::size_t j = 0; j < n; ++j) y[j] += alpha * x[j];
}

template <typename T>
T sigmoid(T x) {
    return T(1) / (T(1) + std::exp(-x));
}

template <typename T>
struct DirectionCache {
    std::vector<T> gates;  // steps x 4u, post-activation i, f, g, o
    std::vector<T> cell;   // steps x u
    std::vector<T> tanh_cell;
    std::vector<T> hidden;
};

template <typename T>
struct LayerCache {
    std::vector<T> input;  // steps x in, after dropout
    std::vector<T> mask;   // steps x in, empty when no dropout
    DirectionCache<T> dir[2];
    std::vector<T> output;  // steps x 2u
};

template <typename T>
struct NetCache {
    std::size_t steps = 0;
    std::vector<LayerCache<T>> layers;
    std::vector<T> pooled;  // 2u, after dropout
    std::vector<T> head_mask;
    T score = T(0);
};

struct DropoutPlan {
    double rate = 0.0;
    std::uint64_t seed = 0;
    bool active() const { return rate > 0.0; }
};

template <typename T>
void make_mask(std::vector<T>& mask, std::size_t n, double rate, detail::Rng& rng) {
    mask.resize(n);
    const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
    for (auto& m : mask) m = rng.uniform() < rate ? T(0) : keep_scale;
}

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using RowVec = Eigen::Matrix<T, 1, Eigen::Dynamic>;

// Runs one direction over the whole input. `reverse` walks t = steps-1 .. 0.
template <typename T>
void run_direction(const T* W, const T* U, const T* b, std::size_t in, std::size_t u,
                   const T* x, std::size_t steps, bool reverse, DirectionCache<T>& cache,
                   T* output, std::size_t out_stride, std::size_t out_offset) {
    const Eigen::Index rows = static_cast<Eigen::Index>(4 * u);
    const Eigen::Index n = static_cast<Eigen::Index>(steps);
    const Eigen::Index nu = static_cast<Eigen::Index>(u);
    Eigen::Map<const RowMat<T>> Wm(W, rows, static_cast<Eigen::Index>(in));
    Eigen::Map<const RowMat<T>> Um(U, rows, static_cast<Eigen::Index>(u));
    Eigen::Map<const RowVec<T>> bv(b, rows);
    Eigen::Map<const RowMat<T>> X(x, n, static_cast<Eigen::Index>(in));

    cache.gates.assign(steps * 4 * u, T(0));
    cache.cell.assign(steps * u, T(0));
    cache.tanh_cell.assign(steps * u, T(0));
    cache.hidden.assign(steps * u, T(0));
    // Pre-activations for every step; the recurrent term is added in place.
    Eigen::Map<RowMat<T>> Z(cache.gates.data(), n, rows);
    Z.noalias() = X * Wm.transpose();
    Z.rowwise() += bv;

    for (std::size_t s = 0; s < steps; ++s) {
        const std::size_t t = reverse ? steps - 1 - s : s;
        const bool first = s == 0;
        const std::size_t tp = reverse ? t + 1 : t - 1;
        const T* hprev = first ? nullptr : cache.hidden.data() + tp * u;
        const T* cprev = first ? nullptr : cache.cell.data() + tp * u;
        T* g = cache.gates.data() + t * 4 * u;
        if (hprev) {
            Eigen::Map<RowVec<T>> z(g, rows);
            z.noalias() += Eigen::Map<const RowVec<T>>(hprev, static_cast<Eigen::Index>(u)) * Um.transpose();
        }
        using Arr = Eigen::Array<T, Eigen::Dynamic, 1>;
        Eigen::Map<Arr> ifg(g, 2 * nu), gg(g + 2 * u, nu), og(g + 3 * u, nu);
        ifg = ifg.logistic();
        gg = gg.tanh();
        og = og.logistic();
        Eigen::Map<Arr> c(cache.cell.data() + t * u, nu), tc(cache.tanh_cell.data() + t * u, nu),
            h(cache.hidden.data() + t * u, nu);
        c = Eigen::Map<const Arr>(g, nu) * gg;
        if (cprev) c += Eigen::Map<const Arr>(g + u, nu) * Eigen::Map<const Arr>(cprev, nu);
        tc = c.tanh();
        h = og * tc;
        std::copy_n(h.data(), u, output + t * out_stride + out_offset);
    }
}

// Forward from `first_layer`, whose input (steps x layer_input) is given.
template <typename T>
T run_network(const ParamLayout& layout, const T* p, std::size_t first_layer, const T* input,
              std::size_t steps, const DropoutPlan& dropout, NetCache<T>& cache) {
    cache.steps = steps;
    cache.layers.resize(layout.layers());
    detail::Rng rng(dropout.seed);
    const T* x = input;
    for (std::size_t l = first_layer; l < layout.layers(); ++l) {
        LayerCache<T>& lc = cache.layers[l];
        const std::size_t in = layout.layer_input(l);
        const std::size_t u = layout.layer_units(l);
        lc.input.assign(x, x + steps * in);
        lc.mask.clear();
        if (dropout.active() && l > 0) {
            make_mask(lc.mask, steps * in, dropout.rate, rng);
            for (std::size_t i = 0; i < lc.input.size(); ++i) lc.input[i] *= lc.mask[i];
        }
        lc.output.assign(steps * 2 * u, T(0));
        for (int dir = 0; dir < 2; ++dir) {
            run_direction(p + layout.w(l, dir), p + layout.u(l, dir), p + layout.b(l, dir), in, u,
                          lc.input.data(), steps, dir == 1, lc.dir[dir], lc.output.data(), 2 * u,
                          static_cast<std::size_t>(dir) * u);
        }
        x = lc.output.data();
    }
    const std::size_t top = layout.layers() - 1;
    const std::size_t u = layout.layer_units(top);
    const LayerCache<T>& tc = cache.layers[top];
    cache.pooled.assign(2 * u, T(0));
    std::copy_n(tc.dir[0].hidden.data() + (steps - 1) * u, u, cache.pooled.begin());
    std::copy_n(tc.dir[1].hidden.data(), u, cache.pooled.begin() + static_cast<std::ptrdiff_t>(u));
    cache.head_mask.clear();
    if (dropout.active()) {
        make_mask(cache.head_mask, 2 * u, dropout.rate, rng);
        for (std::size_t k = 0; k < 2 * u; ++k) cache.pooled[k] *= cache.head_mask[k];
    }
    const T logit = p[layout.head_b()] + dot(p + layout.head_w(), cache.pooled.data(), 2 * u);
    cache.score = sigmoid(logit);
    return cache.score;
}

template <typename T>
void backprop_direction(const T* W, const T* U, std::size_t in, std::size_t u, const T* x,
                        std::size_t steps, bool reverse, const DirectionCache<T>& cache,
                        const T* d_out, std::size_t out_stride, std::size_t out_offset, T* dW,
                        T* dU, T* db, T* dx) {
    const Eigen::Index rows = static_cast<Eigen::Index>(4 * u);
    const Eigen::Index n = static_cast<Eigen::Index>(steps);
    const Eigen::Index ni = static_cast<Eigen::Index>(in);
    const Eigen::Index nu = static_cast<Eigen::Index>(u);
    Eigen::Map<const RowMat<T>> Wm(W, rows, ni);
    Eigen::Map<const RowMat<T>> Um(U, rows, nu);

    // Per-step pre-activation gradients and the matching previous hidden
    // state (zero on the first step of the direction).
    RowMat<T> DZ(n, rows);
    RowMat<T> Hprev = RowMat<T>::Zero(n, nu);
    RowVec<T> dh_next = RowVec<T>::Zero(nu);
    std::vector<T> dc_next(u, T(0));
    for (std::size_t s = steps; s-- > 0;) {
        const std::size_t t = reverse ? steps - 1 - s : s;
        const bool first = s == 0;
        const std::size_t tp = reverse ? t + 1 : t - 1;
        const T* cprev = first ? nullptr : cache.cell.data() + tp * u;
        const T* g = cache.gates.data() + t * 4 * u;
        const T* tc = cache.tanh_cell.data() + t * u;
        T* dz = DZ.row(static_cast<Eigen::Index>(t)).data();
        for (std::size_t k = 0; k < u; ++k) {
            const T ig = g[k], fg = g[u + k], gg = g[2 * u + k], og = g[3 * u + k];
            const T dh = d_out[t * out_stride + out_offset + k] + dh_next[static_cast<Eigen::Index>(k)];
            const T dc = dh * og * (T(1) - tc[k] * tc[k]) + dc_next[k];
            dz[k] = dc * gg * ig * (T(1) - ig);
            dz[u + k] = cprev ? dc * cprev[k] * fg * (T(1) - fg) : T(0);
            dz[2 * u + k] = dc * ig * (T(1) - gg * gg);
            dz[3 * u + k] = dh * tc[k] * og * (T(1) - og);
            dc_next[k] = dc * fg;
        }
        if (first) {
            dh_next.setZero();
        } else {
            dh_next.noalias() = DZ.row(static_cast<Eigen::Index>(t)) * Um;
            Hprev.row(static_cast<Eigen::Index>(t)) =
                Eigen::Map<const RowVec<T>>(cache.hidden.data() + tp * u, nu);
        }
    }
    Eigen::Map<const RowMat<T>> X(x, n, ni);
    Eigen::Map<RowMat<T>>(dW, rows, ni).noalias() += DZ.transpose() * X;
    Eigen::Map<RowMat<T>>(dU, rows, nu).noalias() += DZ.transpose() * Hprev;
    Eigen::Map<RowVec<T>>(db, rows) += DZ.colwise().sum();
    Eigen::Map<RowMat<T>>(dx, n, ni).noalias() += DZ * Wm;
}

// Accumulates d(loss)/d(params) into `grad`, given d(loss)/d(score). Layers
// below `first_layer` are skipped.
template <typename T>
void backprop_network(const ParamLayout& layout, const T* p, const NetCache<T>& cache,
                      T d_score, T* grad, std::size_t first_layer = 0) {
    const std::size_t steps = cache.steps;
    const std::size_t top = layout.layers() - 1;
    const std::size_t hu = layout.layer_units(top);
    const T d_logit = d_score * cache.score * (T(1) - cache.score);
    axpy(d_logit, cache.pooled.data(), grad + layout.head_w(), 2 * hu);
    grad[layout.head_b()] += d_logit;

    std::vector<T> d_out(steps * 2 * hu, T(0));
    const T* hw = p + layout.head_w();
    for (std::size_t k = 0; k < hu; ++k) {
        const T mf = cache.head_mask.empty() ? T(1) : cache.head_mask[k];
        const T mb = cache.head_mask.empty() ? T(1) : cache.head_mask[hu + k];
        d_out[(steps - 1) * 2 * hu + k] += d_logit * hw[k] * mf;
        d_out[hu + k] += d_logit * hw[hu + k] * mb;
    }

    std::vector<T> d_in;
    for (std::size_t l = layout.layers(); l-- > first_layer;) {
        const LayerCache<T>& lc = cache.layers[l];
        const std::size_t in = layout.layer_input(l);
        const std::size_t u = layout.layer_units(l);
        d_in.assign(steps * in, T(0));
        for (int dir = 0; dir < 2; ++dir) {
            backprop_direction(p + layout.w(l, dir), p + layout.u(l, dir), in, u, lc.input.data(),
                               steps, dir == 1, lc.dir[dir], d_out.data(), 2 * u,
                               static_cast<std::size_t>(dir) * u, grad + layout.w(l, dir),
                               grad + layout.u(l, dir), grad + layout.b(l, dir), d_in.data());
        }
        if (l == first_layer) break;
        if (!lc.mask.empty()) {
            for (std::size_t i = 0; i < d_in.size(); ++i) d_in[i] *= lc.mask[i];
        }
        d_out.swap(d_in);
    }
}

void check_window(const BiLstmModel& model, const FeatureSequence& window) {
    if (window.empty()) throw EmptyWindow("window has no timesteps");
    if (window.dim() != model.config.embedding_dim) {
        throw DimensionMismatch("window vectors are " + std::to_string(window.dim()) +
                                "-dim, model expects " +
                                std::to_string(model.config.embedding_dim));
    }
    if (model.params.size() != model.layout().total()) {
        throw DimensionMismatch("parameter vector does not match the model layout");
    }
}

std::vector<double> to_double(std::span<const float> v) { return {v.begin(), v.end()}; }

}  // namespace

float forward(const BiLstmModel& model, const FeatureSequence& window, bool training,
              std::uint64_t dropout_seed) {
    check_window(model, window);
    const ParamLayout layout = model.layout();
    NetCache<float> cache;
    DropoutPlan plan;
    if (training) plan = {model.config.dropout_rate, dropout_seed};
    const float s = run_network(layout, model.params.data(), 0, window.data(), window.size(), plan, cache);
    // Keep the open interval even where float rounding saturates the sigmoid.
    return std::clamp(s, std::nextafter(0.0f, 1.0f), std::nextafter(1.0f, 0.0f));
}

FeatureSequence layer_outputs(const BiLstmModel& model, std::size_t layer,
                              const FeatureSequence& input) {
    const ParamLayout layout = model.layout();
    if (layer >= layout.layers()) throw DimensionMismatch("no such layer");
    if (input.empty()) throw EmptyWindow("input has no timesteps");
    if (input.dim() != layout.layer_input(layer)) throw DimensionMismatch("layer input width");
    const std::size_t u = layout.layer_units(layer);
    std::vector<float> out(input.size() * 2 * u);
    DirectionCache<float> cache;
    const float* p = model.params.data();
    for (int dir = 0; dir < 2; ++dir) {
        run_direction(p + layout.w(layer, dir), p + layout.u(layer, dir), p + layout.b(layer, dir),
                      input.dim(), u, input.data(), input.size(), dir == 1, cache, out.data(), 2 * u,
                      static_cast<std::size_t>(dir) * u);
    }
    return FeatureSequence(2 * u, std::move(out));
}

// ---------------------------------------------------------------------------
// Optimization
// ---------------------------------------------------------------------------

AdamOptimizer::AdamOptimizer(std::size_t n, double lr, double beta1, double beta2, double epsilon)
    : lr_(lr), beta1_(beta1), beta2_(beta2), epsilon_(epsilon), m_(n, 0.0), v_(n, 0.0) {}

void AdamOptimizer::step(std::span<float> params, std::span<const float> grads) {
    if (params.size() != m_.size() || grads.size() != m_.size()) {
        throw DimensionMismatch("optimizer state does not match parameter count");
    }
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = grads[i];
        m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * g;
        v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * g * g;
        const double m_hat = m_[i] / c1;
        const double v_hat = v_[i] / c2;
        params[i] = static_cast<float>(params[i] - lr_ * m_hat / (std::sqrt(v_hat) + epsilon_));
    }
}

double clip_global_norm(std::span<float> grads, double max_norm) {
    double sq = 0.0;
    for (float g : grads) sq += static_cast<double>(g) * g;
    const double norm = std::sqrt(sq);
    if (norm > max_norm && norm > 0.0) {
        const float scale = static_cast<float>(max_norm / norm);
        for (float& g : grads) g *= scale;
    }
    return norm;
}

TrainingResult train(BiLstmModel model, std::span<const LabeledWindow> dataset,
                     const TrainingConfig& config, const EpochCallback& on_epoch) {
    validate(config);
    if (dataset.empty()) throw EmptyDataset("training set is empty");
    if (ParamLayout(config).total() != model.params.size() ||
        config.embedding_dim != model.config.embedding_dim) {
        throw DimensionMismatch("model architecture does not match the training config");
    }
    model.config = config;
    for (const LabeledWindow& ex : dataset) check_window(model, ex.window);

    const ParamLayout layout = model.layout();
    AdamOptimizer adam(layout.total(), config.learning_rate, config.adam_beta1, config.adam_beta2,
                       config.adam_epsilon);
    std::vector<float> grad(layout.total());
    std::vector<std::size_t> order(dataset.size());
    NetCache<float> cache;
    TrainingResult result;

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        detail::Rng(detail::mix_seed(config.seed, 0x5eed, epoch)).shuffle(order);
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t end = std::min(order.size(), start + config.batch_size);
            const float scale = 1.0f / static_cast<float>(end - start);
            std::fill(grad.begin(), grad.end(), 0.0f);
            for (std::size_t k = start; k < end; ++k) {
                const LabeledWindow& ex = dataset[order[k]];
                const DropoutPlan plan{config.dropout_rate, detail::mix_seed(config.seed, epoch + 1, k)};
                const float s = run_network(layout, model.params.data(), 0, ex.window.data(),
                                            ex.window.size(), plan, cache);
                backprop_network(layout, model.params.data(), cache, 2.0f * (s - ex.label) * scale,
                                 grad.data());
            }
            clip_global_norm(grad, kGradientClipNorm);
            for (float g : grad) {
                if (!std::isfinite(g)) throw NonFiniteLoss("non-finite gradient");
            }
            adam.step(model.params, grad);
        }
        double loss = 0.0;
        for (const LabeledWindow& ex : dataset) {
            const double d = static_cast<double>(forward(model, ex.window)) - ex.label;
            loss += d * d;
        }
        loss /= static_cast<double>(dataset.size());
        if (!std::isfinite(loss)) throw NonFiniteLoss("loss became non-finite");
        result.epoch_loss.push_back(loss);
        if (on_epoch) on_epoch(epoch, loss);
    }
    result.model = std::move(model);
    return result;
}

// ---------------------------------------------------------------------------
// Gradient verification
// ---------------------------------------------------------------------------

std::vector<double> loss_gradient(const BiLstmModel& model, const FeatureSequence& window,
                                  float label) {
    check_window(model, window);
    const ParamLayout layout = model.layout();
    const std::vector<double> p = to_double(model.params);
    const std::vector<double> x = to_double(window.values());
    NetCache<double> cache;
    const double s = run_network(layout, p.data(), 0, x.data(), window.size(), {}, cache);
    std::vector<double> grad(layout.total(), 0.0);
    backprop_network(layout, p.data(), cache, 2.0 * (s - label), grad.data());
    return grad;
}

namespace {

// Central difference of the loss in precision T. Layers below the perturbed
// one are reused from a cached unperturbed pass.
template <typename T>
class CentralDifference {
public:
    CentralDifference(const BiLstmModel& model, const FeatureSequence& window, float label)
        : layout_(model.layout()),
          p_(model.params.begin(), model.params.end()),
          x_(window.values().begin(), window.values().end()),
          steps_(window.size()),
          label_(label) {
        run_network(layout_, p_.data(), 0, x_.data(), steps_, {}, base_);
    }

    double derivative(std::size_t index, std::size_t layer, double epsilon) {
        T& theta = p_[index];
        const T saved = theta;
        theta = saved + static_cast<T>(epsilon);
        const T lp = loss_from(layer);
        theta = saved - static_cast<T>(epsilon);
        const T lm = loss_from(layer);
        theta = saved;
        return static_cast<double>((lp - lm) / (T(2) * static_cast<T>(epsilon)));
    }

private:
    T loss_from(std::size_t layer) {
        const T* in = layer == 0 ? x_.data() : base_.layers[layer - 1].output.data();
        const T s = run_network(layout_, p_.data(), layer, in, steps_, {}, scratch_);
        return (s - label_) * (s - label_);
    }

    ParamLayout layout_;
    std::vector<T> p_;
    std::vector<T> x_;
    std::size_t steps_;
    T label_;
    NetCache<T> base_;
    NetCache<T> scratch_;
};

// Double-precision differences carry ~1e-11 of rounding noise, which is
// comparable to the smallest gradients of a fresh deep model.
constexpr double kRefineAbove = 1e-5;

}  // namespace

GradientCheckResult gradient_check(const BiLstmModel& model, const FeatureSequence& window,
                                   float label, double epsilon, std::size_t coords_per_tensor) {
    const std::vector<double> analytic = loss_gradient(model, window, label);
    const ParamLayout layout = model.layout();
    CentralDifference<double> fd(model, window, label);
    std::optional<CentralDifference<long double>> fd_ext;

    GradientCheckResult result;
    detail::Rng rng(detail::mix_seed(model.config.seed, 0x6c3c));
    const auto& slots = layout.tensors();
    for (std::size_t si = 0; si < slots.size(); ++si) {
        const TensorSlot& slot = slots[si];
        // Slots are ordered per layer (6 each) with the head last.
        const std::size_t layer = std::min(si / 6, layout.layers());
        const std::size_t first = layer == layout.layers() ? layout.layers() - 1 : layer;

        std::vector<std::size_t> coords(slot.size);
        std::iota(coords.begin(), coords.end(), std::size_t{0});
        if (slot.size > coords_per_tensor) {
            rng.shuffle(coords);
            coords.resize(coords_per_tensor);
            std::sort(coords.begin(), coords.end());
        }
        GradientCheckResult::PerTensor per{slot.name, 0.0, 0.0};
        for (std::size_t c : coords) {
            const std::size_t index = slot.offset + c;
            const double ga = analytic[index];
            auto relative = [&](double gn) {
                return std::abs(ga - gn) / std::max(1e-8, std::abs(ga) + std::abs(gn));
            };
            double gn = fd.derivative(index, first, epsilon);
            if (relative(gn) > kRefineAbove) {
                if (!fd_ext) fd_ext.emplace(model, window, label);
                gn = fd_ext->derivative(index, first, epsilon);
                ++result.refined;
            }
            per.max_relative_error = std::max(per.max_relative_error, relative(gn));
            per.max_abs_difference = std::max(per.max_abs_difference, std::abs(ga - gn));
            ++result.coordinates;
        }
        result.max_relative_error = std::max(result.max_relative_error, per.max_relative_error);
        result.tensors.push_back(std::move(per));
    }
    return result;
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

std::string serialize_model(const BiLstmModel& model) {
    const ParamLayout layout = model.layout();
    if (model.params.size() != layout.total()) {
        throw DimensionMismatch("parameter vector does not match the model layout");
    }
    model_file::Document doc;
    doc.kind = "bilstm";
    doc.config = config_json(model.config);
    doc.extra["vuln_type"] = std::string(to_string(model.vuln_type));
    for (const TensorSlot& s : layout.tensors()) {
        doc.tensors[s.name] = {s.shape, std::vector<float>(model.params.begin() + static_cast<std::ptrdiff_t>(s.offset),
                                                           model.params.begin() + static_cast<std::ptrdiff_t>(s.offset + s.size))};
    }
    return model_file::serialize(doc);
}

BiLstmModel parse_model(std::string_view text) {
    model_file::Document doc = model_file::parse(text, "bilstm");
    BiLstmModel m;
    m.config = config_from(doc.config);
    try {
        validate(m.config);
    } catch (const InvalidConfig& e) {
        throw FormatError(std::string("bad bilstm config: ") + e.what());
    }
    if (!doc.extra.contains("vuln_type") || !doc.extra["vuln_type"].is_string()) {
        throw FormatError("missing vuln_type");
    }
    auto type = parse_vuln_type(doc.extra["vuln_type"].get<std::string>());
    if (!type) throw FormatError("unknown vuln_type");
    m.vuln_type = *type;
    const ParamLayout layout(m.config);
    if (doc.tensors.size() != layout.tensors().size()) {
        throw FormatError("tensor set does not match the configured architecture");
    }
    m.params.assign(layout.total(), 0.0f);
    for (const TensorSlot& s : layout.tensors()) {
        const auto& t = model_file::require_tensor(doc, s.name, s.shape);
        for (float v : t.values) {
            if (!std::isfinite(v)) throw FormatError("non-finite parameter in '" + s.name + "'");
        }
        std::copy(t.values.begin(), t.values.end(), m.params.begin() + static_cast<std::ptrdiff_t>(s.offset));
    }
    return m;
}

void save_model(const BiLstmModel& model, const std::filesystem::path& path) {
    model_file::write_text(path, serialize_model(model));
}

BiLstmModel load_model(const std::filesystem::path& path) {
    return parse_model(model_file::read_text(path));
}

}  // namespace pyguard
