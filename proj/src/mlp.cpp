#include "exprsaug/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "exprsaug/errors.hpp"
#include "exprsaug/kernels.hpp"

namespace exprsaug::mlp {

namespace {

constexpr double kMinProbability = 1e-12;

std::string_view activation_name(Activation a) {
    switch (a) {
        case Activation::relu: return "relu";
        case Activation::identity: return "identity";
        case Activation::softmax: return "softmax";
    }
    return "relu";
}

Activation parse_activation(std::string_view s) {
    if (s == "relu") return Activation::relu;
    if (s == "identity") return Activation::identity;
    if (s == "softmax") return Activation::softmax;
    throw DataError("unknown activation '" + std::string(s) + "'");
}

void softmax_rows(const Matrix& logits, Matrix& probs) {
    probs = Matrix(logits.rows(), logits.cols());
    for (std::size_t r = 0; r < logits.rows(); ++r) {
        auto in = logits.row(r);
        auto out = probs.row(r);
        const double top = *std::max_element(in.begin(), in.end());
        double total = 0.0;
        for (std::size_t k = 0; k < in.size(); ++k) {
            out[k] = std::exp(in[k] - top);
            total += out[k];
        }
        for (double& p : out) p /= total;
    }
}

void require_finite(const Matrix& m, const char* what) {
    for (double v : m.values())
        if (!std::isfinite(v)) throw NumericError(std::string("non-finite value in ") + what);
}

}  // namespace

void MlpConfig::validate() const {
    if (input_dim < 1) throw UsageError("input dimension must be at least 1");
    if (output_dim < 1) throw UsageError("output dimension must be at least 1");
    for (const auto& h : hidden) {
        if (h.width < 1) throw UsageError("hidden layer width must be at least 1");
        if (!(h.dropout >= 0.0 && h.dropout < 1.0)) throw UsageError("dropout rate must lie in [0, 1)");
        if (h.activation == Activation::softmax) throw UsageError("hidden layers cannot use softmax");
    }
    if (batch_size < 1) throw UsageError("batch size must be at least 1");
}

MlpModel init_model(const MlpConfig& config, std::uint64_t seed) {
    config.validate();
    MlpModel model;
    model.config = config;
    Rng rng(seed);
    std::size_t fan_in = config.input_dim;
    auto add_layer = [&](std::size_t width, Activation act, double dropout) {
        DenseLayer layer;
        layer.weights = Matrix(width, fan_in);
        layer.bias.assign(width, 0.0);
        layer.activation = act;
        layer.dropout = dropout;
        const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + width));
        for (double& w : layer.weights.values()) w = (2.0 * rng.uniform() - 1.0) * limit;
        model.layers.push_back(std::move(layer));
        fan_in = width;
    };
    for (const auto& h : config.hidden) add_layer(h.width, h.activation, h.dropout);
    add_layer(config.output_dim, Activation::softmax, 0.0);
    return model;
}

ForwardCache forward(const MlpModel& model, const Matrix& batch, Mode mode, Rng* dropout_rng) {
    if (batch.cols() != model.input_dim())
        throw DataError("input has " + std::to_string(batch.cols()) + " features, model expects " +
                        std::to_string(model.input_dim()));
    ForwardCache cache;
    const std::size_t n_layers = model.layers.size();
    cache.pre.resize(n_layers);
    cache.post.resize(n_layers - 1);
    cache.masks.resize(n_layers - 1);
    const Matrix* input = &batch;
    for (std::size_t l = 0; l < n_layers; ++l) {
        const DenseLayer& layer = model.layers[l];
        kernels::affine_forward(*input, layer.weights, layer.bias, cache.pre[l]);
        if (l + 1 == n_layers) break;
        Matrix& a = cache.post[l];
        a = cache.pre[l];
        if (layer.activation == Activation::relu)
            for (double& v : a.values()) v = v > 0.0 ? v : 0.0;
        if (mode == Mode::train && layer.dropout > 0.0) {
            if (dropout_rng == nullptr) throw UsageError("train-mode forward needs a dropout stream");
            const double keep = 1.0 - layer.dropout;
            const double scale = 1.0 / keep;
            Matrix& mask = cache.masks[l];
            mask = Matrix(a.rows(), a.cols());
            for (double& m : mask.values()) m = dropout_rng->bernoulli(keep) ? scale : 0.0;
            for (std::size_t i = 0; i < a.size(); ++i) a.data()[i] *= mask.data()[i];
        }
        input = &a;
    }
    softmax_rows(cache.pre.back(), cache.probabilities);
    return cache;
}

double cross_entropy(const Matrix& probabilities, std::span<const int> labels) {
    if (labels.empty()) return 0.0;
    double total = 0.0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const double p = probabilities(i, static_cast<std::size_t>(labels[i]));
        total -= std::log(std::max(p, kMinProbability));
    }
    return total / static_cast<double>(labels.size());
}

Gradients backward(const MlpModel& model, const Matrix& batch, std::span<const int> labels,
                   const ForwardCache& cache) {
    const std::size_t n = batch.rows();
    const std::size_t n_layers = model.layers.size();
    Gradients g;
    g.weights.resize(n_layers);
    g.bias.resize(n_layers);

    Matrix dz = cache.probabilities;
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
        dz(i, static_cast<std::size_t>(labels[i])) -= 1.0;
        for (double& v : dz.row(i)) v *= inv_n;
    }
    Matrix da;
    for (std::size_t l = n_layers; l-- > 0;) {
        const Matrix& a_prev = l == 0 ? batch : cache.post[l - 1];
        g.bias[l].assign(model.layers[l].out_dim(), 0.0);
        kernels::weight_gradient(dz, a_prev, g.weights[l], g.bias[l]);
        if (l == 0) break;
        kernels::input_gradient(dz, model.layers[l].weights, da);
        const DenseLayer& below = model.layers[l - 1];
        const Matrix& pre = cache.pre[l - 1];
        const Matrix& mask = cache.masks[l - 1];
        for (std::size_t i = 0; i < da.size(); ++i) {
            double d = da.data()[i];
            if (below.activation == Activation::relu && !(pre.data()[i] > 0.0)) d = 0.0;
            if (!mask.empty()) d *= mask.data()[i];
            da.data()[i] = d;
        }
        std::swap(dz, da);
    }
    return g;
}

AdamState AdamState::zeros(std::span<const std::size_t> tensor_sizes) {
    AdamState s;
    for (auto size : tensor_sizes) {
        s.m.emplace_back(size, 0.0);
        s.v.emplace_back(size, 0.0);
    }
    return s;
}

AdamState AdamState::for_model(const MlpModel& model) {
    std::vector<std::size_t> sizes;
    for (const auto& layer : model.layers) {
        sizes.push_back(layer.weights.size());
        sizes.push_back(layer.bias.size());
    }
    return zeros(sizes);
}

void adam_step(std::span<const std::span<double>> params, std::span<const std::span<const double>> grads,
               AdamState& state, const AdamHyper& hyper) {
    if (params.size() != grads.size() || params.size() != state.m.size())
        throw UsageError("adam: tensor count mismatch");
    state.t += 1;
    const double t = static_cast<double>(state.t);
    kernels::AdamCoefficients c{hyper.learning_rate, hyper.beta1, hyper.beta2, hyper.epsilon,
                                1.0 - std::pow(hyper.beta1, t), 1.0 - std::pow(hyper.beta2, t)};
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (params[i].size() != grads[i].size() || params[i].size() != state.m[i].size())
            throw UsageError("adam: tensor shape mismatch");
        kernels::adam_update(params[i], grads[i], state.m[i], state.v[i], c);
    }
}

void adam_step(MlpModel& model, const Gradients& grads, AdamState& state, const AdamHyper& hyper) {
    std::vector<std::span<double>> params;
    std::vector<std::span<const double>> g;
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        params.emplace_back(model.layers[l].weights.values());
        g.emplace_back(grads.weights[l].values());
        params.emplace_back(model.layers[l].bias);
        g.emplace_back(grads.bias[l]);
    }
    adam_step(params, g, state, hyper);
}

TrainResult train(const Matrix& x, std::span<const int> labels, std::vector<std::string> class_names,
                  MlpConfig config) {
    config.input_dim = x.cols();
    config.output_dim = class_names.size();
    if (config.output_dim < 2) throw DataError("training needs at least two classes");
    if (labels.size() != x.rows()) throw DataError("label count does not match sample count");
    for (int y : labels)
        if (y < 0 || static_cast<std::size_t>(y) >= config.output_dim) throw DataError("label out of range");

    TrainResult result;
    result.model = init_model(config, derive_seed(config.seed, "mlp.init"));
    result.model.class_names = std::move(class_names);
    Rng shuffle_rng(derive_seed(config.seed, "mlp.shuffle"));
    Rng dropout_rng(derive_seed(config.seed, "mlp.dropout"));
    AdamState state = AdamState::for_model(result.model);

    const std::size_t n = x.rows();
    std::vector<int> batch_labels;
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        auto order = shuffle_rng.permutation(n);
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < n; start += config.batch_size) {
            const std::size_t stop = std::min(n, start + config.batch_size);
            std::span<const std::size_t> idx(order.data() + start, stop - start);
            Matrix batch = x.select_rows(idx);
            batch_labels.clear();
            for (auto i : idx) batch_labels.push_back(labels[i]);

            ForwardCache cache = forward(result.model, batch, Mode::train, &dropout_rng);
            const double loss = cross_entropy(cache.probabilities, batch_labels);
            if (!std::isfinite(loss))
                throw NumericError("training diverged: loss is " + std::to_string(loss) + " in epoch " +
                                   std::to_string(epoch + 1));
            epoch_loss += loss * static_cast<double>(idx.size());
            Gradients grads = backward(result.model, batch, batch_labels, cache);
            adam_step(result.model, grads, state, config.adam);
        }
        result.loss_history.push_back(n == 0 ? 0.0 : epoch_loss / static_cast<double>(n));
    }
    for (const auto& layer : result.model.layers) require_finite(layer.weights, "trained weights");
    return result;
}

TrainResult train(const AnnotatedDataset& data, MlpConfig config) {
    return train(data.matrix.design(), data.labels, data.class_names, std::move(config));
}

int argmax(std::span<const double> row) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < row.size(); ++k)
        if (row[k] > row[best]) best = k;
    return static_cast<int>(best);
}

Prediction predict(const MlpModel& model, const Matrix& x) {
    ForwardCache cache = forward(model, x, Mode::infer);
    Prediction p;
    p.probabilities = std::move(cache.probabilities);
    p.labels.reserve(x.rows());
    for (std::size_t i = 0; i < x.rows(); ++i) p.labels.push_back(argmax(p.probabilities.row(i)));
    return p;
}

nlohmann::json to_json(const MlpModel& model) {
    using nlohmann::json;
    const MlpConfig& c = model.config;
    json hidden = json::array();
    for (const auto& h : c.hidden)
        hidden.push_back({{"width", h.width}, {"dropout", h.dropout}, {"activation", activation_name(h.activation)}});
    json layers = json::array();
    for (const auto& layer : model.layers) {
        json weights = json::array();
        for (std::size_t o = 0; o < layer.out_dim(); ++o) {
            auto r = layer.weights.row(o);
            weights.push_back(std::vector<double>(r.begin(), r.end()));
        }
        layers.push_back({{"in", layer.in_dim()},
                          {"out", layer.out_dim()},
                          {"activation", activation_name(layer.activation)},
                          {"dropout", layer.dropout},
                          {"weights", std::move(weights)},
                          {"bias", layer.bias}});
    }
    return {{"format_version", 1},
            {"kind", "mlp"},
            {"config",
             {{"input_dim", c.input_dim},
              {"hidden", std::move(hidden)},
              {"output_dim", c.output_dim},
              {"epochs", c.epochs},
              {"batch_size", c.batch_size},
              {"adam",
               {{"learning_rate", c.adam.learning_rate},
                {"beta1", c.adam.beta1},
                {"beta2", c.adam.beta2},
                {"epsilon", c.adam.epsilon}}},
              {"seed", c.seed}}},
            {"class_names", model.class_names},
            {"layers", std::move(layers)}};
}

MlpModel model_from_json(const nlohmann::json& doc) {
    try {
        if (doc.at("format_version").get<int>() != 1) throw DataError("unsupported model format_version");
        if (doc.at("kind").get<std::string>() != "mlp") throw DataError("document is not an MLP model");
        MlpModel model;
        const auto& c = doc.at("config");
        model.config.input_dim = c.at("input_dim").get<std::size_t>();
        model.config.hidden.clear();
        for (const auto& h : c.at("hidden"))
            model.config.hidden.push_back({h.at("width").get<std::size_t>(), h.at("dropout").get<double>(),
                                           parse_activation(h.at("activation").get<std::string>())});
        model.config.output_dim = c.at("output_dim").get<std::size_t>();
        model.config.epochs = c.at("epochs").get<std::size_t>();
        model.config.batch_size = c.at("batch_size").get<std::size_t>();
        const auto& a = c.at("adam");
        model.config.adam = {a.at("learning_rate").get<double>(), a.at("beta1").get<double>(),
                             a.at("beta2").get<double>(), a.at("epsilon").get<double>()};
        model.config.seed = c.at("seed").get<std::uint64_t>();
        model.class_names = doc.at("class_names").get<std::vector<std::string>>();
        std::size_t expected_in = model.config.input_dim;
        for (const auto& l : doc.at("layers")) {
            DenseLayer layer;
            const auto in = l.at("in").get<std::size_t>();
            const auto out = l.at("out").get<std::size_t>();
            if (in != expected_in) throw DataError("layer dimensions do not chain");
            layer.weights = Matrix(out, in);
            const auto& w = l.at("weights");
            if (w.size() != out) throw DataError("weight matrix has wrong row count");
            for (std::size_t o = 0; o < out; ++o) {
                auto row = w[o].get<std::vector<double>>();
                if (row.size() != in) throw DataError("weight matrix has wrong column count");
                std::copy(row.begin(), row.end(), layer.weights.row(o).begin());
            }
            layer.bias = l.at("bias").get<std::vector<double>>();
            if (layer.bias.size() != out) throw DataError("bias has wrong length");
            layer.activation = parse_activation(l.at("activation").get<std::string>());
            layer.dropout = l.at("dropout").get<double>();
            model.layers.push_back(std::move(layer));
            expected_in = out;
        }
        if (model.layers.empty()) throw DataError("model has no layers");
        return model;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed model document: ") + e.what());
    }
}

std::string serialize(const MlpModel& model) { return to_json(model).dump(1) + "\n"; }

void save_model(const std::filesystem::path& path, const MlpModel& model) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out << serialize(model);
}

MlpModel load_model(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    try {
        return model_from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::parse_error& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

}  // namespace exprsaug::mlp
