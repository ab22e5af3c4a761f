#include "n1grid/surrogate.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "n1grid/rng.hpp"

namespace n1grid {
namespace {

constexpr double kLeakySlope = 0.01;

double activation(double z) { return z > 0.0 ? z : kLeakySlope * z; }
double activation_grad(double z) { return z > 0.0 ? 1.0 : kLeakySlope; }

void affine(const DenseLayer& layer, std::span<const double> x, std::vector<double>& out) {
    out.assign(static_cast<std::size_t>(layer.out), 0.0);
    for (int r = 0; r < layer.out; ++r) {
        const double* wrow = layer.w.data() + static_cast<std::size_t>(r) * layer.in;
        double acc = layer.b[static_cast<std::size_t>(r)];
        for (int c = 0; c < layer.in; ++c) acc += wrow[c] * x[static_cast<std::size_t>(c)];
        out[static_cast<std::size_t>(r)] = acc;
    }
}

}  // namespace

std::vector<double> FeatureCodec::raw_input(const ScenarioRecord& rec) {
    std::vector<double> x;
    x.reserve(2 * rec.input_pg.size() + 2 * rec.input_pl.size() + rec.in_service.size());
    for (std::size_t i = 0; i < rec.input_pg.size(); ++i) {
        x.push_back(rec.input_pg[i]);
        x.push_back(rec.input_vm[i]);
    }
    for (std::size_t i = 0; i < rec.input_pl.size(); ++i) {
        x.push_back(rec.input_pl[i]);
        x.push_back(rec.input_ql[i]);
    }
    for (std::uint8_t bit : rec.in_service) x.push_back(static_cast<double>(bit));
    return x;
}

std::vector<double> FeatureCodec::raw_output(const ScenarioRecord& rec) {
    std::vector<double> y;
    y.reserve(2 * rec.br_i_or.size() + rec.inj_current.size());
    for (std::size_t i = 0; i < rec.br_i_or.size(); ++i) {
        y.push_back(rec.br_i_or[i]);
        y.push_back(rec.br_i_ex[i]);
    }
    for (double v : rec.inj_current) y.push_back(v);
    return y;
}

std::vector<double> FeatureCodec::encode_input(const ScenarioRecord& rec) const {
    std::vector<double> x = raw_input(rec);
    if (x.size() != in_mean.size())
        throw std::invalid_argument("record input dimension does not match codec");
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = (x[i] - in_mean[i]) / in_std[i];
    return x;
}

std::vector<double> FeatureCodec::encode_output(const ScenarioRecord& rec) const {
    std::vector<double> y = raw_output(rec);
    if (y.size() != out_mean.size())
        throw std::invalid_argument("record output dimension does not match codec");
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = (y[i] - out_mean[i]) / out_std[i];
    return y;
}

std::vector<double> FeatureCodec::decode_output(std::span<const double> normalized) const {
    if (normalized.size() != out_mean.size())
        throw std::invalid_argument("output dimension does not match codec");
    std::vector<double> y(normalized.size());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = normalized[i] * out_std[i] + out_mean[i];
    return y;
}

namespace {

void moments(const std::vector<std::vector<double>>& rows, std::vector<double>& mean,
             std::vector<double>& std_dev) {
    const std::size_t dim = rows.front().size();
    const double n = static_cast<double>(rows.size());
    mean.assign(dim, 0.0);
    std_dev.assign(dim, 0.0);
    for (const auto& row : rows)
        for (std::size_t i = 0; i < dim; ++i) mean[i] += row[i];
    for (double& m : mean) m /= n;
    for (const auto& row : rows)
        for (std::size_t i = 0; i < dim; ++i) {
            const double d = row[i] - mean[i];
            std_dev[i] += d * d;
        }
    for (double& s : std_dev) {
        s = std::sqrt(s / n);
        if (s < 1e-12) s = 1.0;  // constant feature
    }
}

}  // namespace

FeatureCodec fit_codec(std::span<const ScenarioRecord> train_records) {
    if (train_records.empty()) throw std::invalid_argument("fit_codec: empty input");
    const ScenarioRecord& first = train_records.front();

    FeatureCodec codec;
    codec.n_bus = static_cast<int>(first.inj_current.size());
    codec.n_branch = static_cast<int>(first.br_i_or.size());
    codec.n_pv = static_cast<int>(first.input_pg.size());
    codec.n_pq = static_cast<int>(first.input_pl.size());

    std::vector<std::vector<double>> xs, ys;
    xs.reserve(train_records.size());
    ys.reserve(train_records.size());
    for (const ScenarioRecord& rec : train_records) {
        xs.push_back(FeatureCodec::raw_input(rec));
        ys.push_back(FeatureCodec::raw_output(rec));
        if (xs.back().size() != static_cast<std::size_t>(codec.input_dim()) ||
            ys.back().size() != static_cast<std::size_t>(codec.output_dim()))
            throw std::invalid_argument("records are not homogeneous");
    }
    moments(xs, codec.in_mean, codec.in_std);
    moments(ys, codec.out_mean, codec.out_std);
    return codec;
}

Variant variant_from_name(const std::string& name) {
    if (name == "small") return Variant::Small;
    if (name == "medium") return Variant::Medium;
    throw std::invalid_argument("unknown variant: " + name);
}

std::string variant_name(Variant v) {
    return v == Variant::Small ? "small" : "medium";
}

namespace {

struct Shape {
    int blocks;
    int width;
};

Shape shape_of(Variant v) {
    return v == Variant::Small ? Shape{2, 64} : Shape{4, 128};
}

DenseLayer init_layer(int in, int out, Rng& rng) {
    DenseLayer layer;
    layer.in = in;
    layer.out = out;
    layer.w.resize(static_cast<std::size_t>(in) * out);
    layer.b.assign(static_cast<std::size_t>(out), 0.0);
    const double limit = std::sqrt(6.0 / in);
    for (double& w : layer.w) w = (2.0 * rng.uniform() - 1.0) * limit;
    return layer;
}

}  // namespace

ModelParams init_params(Variant variant, int input_dim, int output_dim, std::uint64_t seed) {
    if (input_dim < 1 || output_dim < 1)
        throw std::invalid_argument("model dimensions must be positive");
    const Shape shape = shape_of(variant);
    Rng rng(child_seed(seed, 0x6d6f64656cULL));

    ModelParams params;
    params.variant = variant;
    params.input_dim = input_dim;
    params.hidden_dim = shape.width;
    params.output_dim = output_dim;
    params.stem = init_layer(input_dim, shape.width, rng);
    for (int i = 0; i < shape.blocks; ++i)
        params.blocks.push_back(init_layer(shape.width, shape.width, rng));
    params.head = init_layer(shape.width, output_dim, rng);
    return params;
}

std::vector<double> forward(const ModelParams& params, std::span<const double> x) {
    if (static_cast<int>(x.size()) != params.input_dim)
        throw std::invalid_argument("input dimension mismatch");
    std::vector<double> h, z;
    affine(params.stem, x, z);
    h.resize(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) h[i] = activation(z[i]);
    for (const DenseLayer& block : params.blocks) {
        affine(block, h, z);
        for (std::size_t i = 0; i < z.size(); ++i) h[i] += activation(z[i]);
    }
    std::vector<double> y;
    affine(params.head, h, y);
    return y;
}

double mse_loss(std::span<const double> predicted, std::span<const double> target) {
    if (predicted.size() != target.size())
        throw std::invalid_argument("mse_loss: length mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < predicted.size(); ++i) {
        const double d = predicted[i] - target[i];
        acc += d * d;
    }
    return acc / static_cast<double>(predicted.size());
}

Gradients backward(const ModelParams& params, std::span<const double> x,
                   std::span<const double> target) {
    if (static_cast<int>(x.size()) != params.input_dim)
        throw std::invalid_argument("input dimension mismatch");
    if (static_cast<int>(target.size()) != params.output_dim)
        throw std::invalid_argument("target dimension mismatch");

    // forward pass, keeping every pre-activation and hidden state
    std::vector<double> z_stem;
    affine(params.stem, x, z_stem);
    std::vector<double> h(z_stem.size());
    for (std::size_t i = 0; i < h.size(); ++i) h[i] = activation(z_stem[i]);

    std::vector<std::vector<double>> block_inputs, block_z;
    for (const DenseLayer& block : params.blocks) {
        block_inputs.push_back(h);
        std::vector<double> z;
        affine(block, h, z);
        for (std::size_t i = 0; i < z.size(); ++i) h[i] += activation(z[i]);
        block_z.push_back(std::move(z));
    }
    std::vector<double> y;
    affine(params.head, h, y);

    Gradients grads;
    grads.loss = mse_loss(y, target);

    const double scale = 2.0 / static_cast<double>(y.size());
    std::vector<double> dy(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) dy[i] = scale * (y[i] - target[i]);

    // head
    grads.head.in = params.head.in;
    grads.head.out = params.head.out;
    grads.head.w.assign(params.head.w.size(), 0.0);
    grads.head.b = dy;
    std::vector<double> dh(h.size(), 0.0);
    for (int r = 0; r < params.head.out; ++r) {
        const double g = dy[static_cast<std::size_t>(r)];
        const double* wrow = params.head.w.data() + static_cast<std::size_t>(r) * params.head.in;
        double* grow = grads.head.w.data() + static_cast<std::size_t>(r) * params.head.in;
        for (int c = 0; c < params.head.in; ++c) {
            grow[c] = g * h[static_cast<std::size_t>(c)];
            dh[static_cast<std::size_t>(c)] += g * wrow[c];
        }
    }

    // residual blocks, in reverse; dh flows through both the identity and
    // the activated branch
    grads.blocks.resize(params.blocks.size());
    for (int bi = static_cast<int>(params.blocks.size()) - 1; bi >= 0; --bi) {
        const DenseLayer& block = params.blocks[static_cast<std::size_t>(bi)];
        const std::vector<double>& hin = block_inputs[static_cast<std::size_t>(bi)];
        const std::vector<double>& z = block_z[static_cast<std::size_t>(bi)];
        DenseLayer& g = grads.blocks[static_cast<std::size_t>(bi)];
        g.in = block.in;
        g.out = block.out;
        g.w.assign(block.w.size(), 0.0);
        g.b.assign(block.b.size(), 0.0);

        std::vector<double> dh_next(hin.size(), 0.0);
        for (int r = 0; r < block.out; ++r) {
            const double dz = dh[static_cast<std::size_t>(r)] * activation_grad(z[static_cast<std::size_t>(r)]);
            g.b[static_cast<std::size_t>(r)] = dz;
            const double* wrow = block.w.data() + static_cast<std::size_t>(r) * block.in;
            double* grow = g.w.data() + static_cast<std::size_t>(r) * block.in;
            for (int c = 0; c < block.in; ++c) {
                grow[c] = dz * hin[static_cast<std::size_t>(c)];
                dh_next[static_cast<std::size_t>(c)] += dz * wrow[c];
            }
        }
        for (std::size_t i = 0; i < dh.size(); ++i) dh[i] += dh_next[i];
    }

    // stem
    grads.stem.in = params.stem.in;
    grads.stem.out = params.stem.out;
    grads.stem.w.assign(params.stem.w.size(), 0.0);
    grads.stem.b.assign(params.stem.b.size(), 0.0);
    for (int r = 0; r < params.stem.out; ++r) {
        const double dz = dh[static_cast<std::size_t>(r)] * activation_grad(z_stem[static_cast<std::size_t>(r)]);
        grads.stem.b[static_cast<std::size_t>(r)] = dz;
        double* grow = grads.stem.w.data() + static_cast<std::size_t>(r) * params.stem.in;
        for (int c = 0; c < params.stem.in; ++c) grow[c] = dz * x[static_cast<std::size_t>(c)];
    }
    return grads;
}

namespace {

struct AdamState {
    std::vector<double> m, v;
    explicit AdamState(std::size_t n) : m(n, 0.0), v(n, 0.0) {}
};

void adam_update(std::vector<double>& param, const std::vector<double>& grad, AdamState& state,
                 double lr, int t) {
    constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    const double bc1 = 1.0 - std::pow(beta1, t);
    const double bc2 = 1.0 - std::pow(beta2, t);
    for (std::size_t i = 0; i < param.size(); ++i) {
        state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * grad[i];
        state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * grad[i] * grad[i];
        const double mhat = state.m[i] / bc1;
        const double vhat = state.v[i] / bc2;
        param[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
}

void accumulate(DenseLayer& acc, const DenseLayer& g) {
    for (std::size_t i = 0; i < acc.w.size(); ++i) acc.w[i] += g.w[i];
    for (std::size_t i = 0; i < acc.b.size(); ++i) acc.b[i] += g.b[i];
}

void scale_layer(DenseLayer& layer, double s) {
    for (double& v : layer.w) v *= s;
    for (double& v : layer.b) v *= s;
}

DenseLayer zeros_like(const DenseLayer& layer) {
    DenseLayer out;
    out.in = layer.in;
    out.out = layer.out;
    out.w.assign(layer.w.size(), 0.0);
    out.b.assign(layer.b.size(), 0.0);
    return out;
}

}  // namespace

TrainResult train(std::span<const ScenarioRecord> train_records, const TrainConfig& cfg,
                  Variant variant) {
    if (cfg.epochs < 0 || cfg.batch_size < 1 || cfg.scheduler_step < 1)
        throw std::invalid_argument("train config out of range");

    TrainResult result;
    result.model.codec = fit_codec(train_records);
    const FeatureCodec& codec = result.model.codec;

    const std::size_t n = train_records.size();
    std::vector<std::vector<double>> xs(n), ys(n);
    for (std::size_t i = 0; i < n; ++i) {
        xs[i] = codec.encode_input(train_records[i]);
        ys[i] = codec.encode_output(train_records[i]);
    }

    ModelParams params = init_params(variant, codec.input_dim(), codec.output_dim(), cfg.seed);

    AdamState st_stem_w(params.stem.w.size()), st_stem_b(params.stem.b.size());
    AdamState st_head_w(params.head.w.size()), st_head_b(params.head.b.size());
    std::vector<AdamState> st_block_w, st_block_b;
    for (const DenseLayer& block : params.blocks) {
        st_block_w.emplace_back(block.w.size());
        st_block_b.emplace_back(block.b.size());
    }

    Rng shuffle_rng(child_seed(cfg.seed, 0x7368756666ULL));
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});

    int step_count = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const double lr =
            cfg.learning_rate * std::pow(cfg.scheduler_gamma, epoch / cfg.scheduler_step);

        // Fisher-Yates with the config-seeded stream
        for (std::size_t i = n; i > 1; --i) {
            const std::size_t j = shuffle_rng.below(i);
            std::swap(order[i - 1], order[j]);
        }

        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t stop = std::min(n, start + static_cast<std::size_t>(cfg.batch_size));
            const double batch_n = static_cast<double>(stop - start);

            DenseLayer g_stem = zeros_like(params.stem);
            DenseLayer g_head = zeros_like(params.head);
            std::vector<DenseLayer> g_blocks;
            for (const DenseLayer& block : params.blocks) g_blocks.push_back(zeros_like(block));

            double batch_loss = 0.0;
            for (std::size_t idx = start; idx < stop; ++idx) {
                const std::size_t s = order[idx];
                Gradients g = backward(params, xs[s], ys[s]);
                batch_loss += g.loss;
                accumulate(g_stem, g.stem);
                accumulate(g_head, g.head);
                for (std::size_t bi = 0; bi < g_blocks.size(); ++bi)
                    accumulate(g_blocks[bi], g.blocks[bi]);
            }
            batch_loss /= batch_n;
            epoch_loss += batch_loss * batch_n;
            if (!std::isfinite(batch_loss))
                throw std::runtime_error("non-finite training loss at epoch " +
                                         std::to_string(epoch) + ", batch starting at sample " +
                                         std::to_string(start));

            scale_layer(g_stem, 1.0 / batch_n);
            scale_layer(g_head, 1.0 / batch_n);
            for (DenseLayer& g : g_blocks) scale_layer(g, 1.0 / batch_n);

            ++step_count;
            adam_update(params.stem.w, g_stem.w, st_stem_w, lr, step_count);
            adam_update(params.stem.b, g_stem.b, st_stem_b, lr, step_count);
            for (std::size_t bi = 0; bi < params.blocks.size(); ++bi) {
                adam_update(params.blocks[bi].w, g_blocks[bi].w, st_block_w[bi], lr, step_count);
                adam_update(params.blocks[bi].b, g_blocks[bi].b, st_block_b[bi], lr, step_count);
            }
            adam_update(params.head.w, g_head.w, st_head_w, lr, step_count);
            adam_update(params.head.b, g_head.b, st_head_b, lr, step_count);
        }
        result.epoch_loss.push_back(epoch_loss / static_cast<double>(n));
    }

    result.model.params = std::move(params);
    return result;
}

std::vector<double> predict(const Surrogate& model, const ScenarioRecord& rec) {
    const std::vector<double> x = model.codec.encode_input(rec);
    const std::vector<double> y = forward(model.params, x);
    return model.codec.decode_output(y);
}

namespace {

constexpr char kMagic[4] = {'N', '1', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

void write_u32(std::ofstream& out, std::uint32_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

void write_vec(std::ofstream& out, const std::vector<double>& v) {
    const std::uint64_t n = v.size();
    out.write(reinterpret_cast<const char*>(&n), sizeof n);
    out.write(reinterpret_cast<const char*>(v.data()),
              static_cast<std::streamsize>(n * sizeof(double)));
}

std::uint32_t read_u32(std::ifstream& in) {
    std::uint32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof v);
    return v;
}

std::vector<double> read_vec(std::ifstream& in) {
    std::uint64_t n = 0;
    in.read(reinterpret_cast<char*>(&n), sizeof n);
    std::vector<double> v(n);
    in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(double)));
    return v;
}

}  // namespace

void save_checkpoint(const Surrogate& model, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
    out.write(kMagic, 4);
    write_u32(out, kVersion);
    write_u32(out, static_cast<std::uint32_t>(model.params.variant));
    write_u32(out, static_cast<std::uint32_t>(model.codec.n_bus));
    write_u32(out, static_cast<std::uint32_t>(model.codec.n_branch));
    write_u32(out, static_cast<std::uint32_t>(model.codec.n_pv));
    write_u32(out, static_cast<std::uint32_t>(model.codec.n_pq));
    write_u32(out, static_cast<std::uint32_t>(model.params.input_dim));
    write_u32(out, static_cast<std::uint32_t>(model.params.hidden_dim));
    write_u32(out, static_cast<std::uint32_t>(model.params.output_dim));
    write_u32(out, static_cast<std::uint32_t>(model.params.blocks.size()));
    write_vec(out, model.codec.in_mean);
    write_vec(out, model.codec.in_std);
    write_vec(out, model.codec.out_mean);
    write_vec(out, model.codec.out_std);
    write_vec(out, model.params.stem.w);
    write_vec(out, model.params.stem.b);
    for (const DenseLayer& block : model.params.blocks) {
        write_vec(out, block.w);
        write_vec(out, block.b);
    }
    write_vec(out, model.params.head.w);
    write_vec(out, model.params.head.b);
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

Surrogate load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint: " + path.string());
    char magic[4] = {};
    in.read(magic, 4);
    if (std::memcmp(magic, kMagic, 4) != 0)
        throw std::runtime_error("not a model checkpoint: " + path.string());
    if (read_u32(in) != kVersion)
        throw std::runtime_error("unsupported checkpoint version in " + path.string());

    Surrogate model;
    model.params.variant = static_cast<Variant>(read_u32(in));
    model.codec.n_bus = static_cast<int>(read_u32(in));
    model.codec.n_branch = static_cast<int>(read_u32(in));
    model.codec.n_pv = static_cast<int>(read_u32(in));
    model.codec.n_pq = static_cast<int>(read_u32(in));
    model.params.input_dim = static_cast<int>(read_u32(in));
    model.params.hidden_dim = static_cast<int>(read_u32(in));
    model.params.output_dim = static_cast<int>(read_u32(in));
    const std::uint32_t n_blocks = read_u32(in);
    model.codec.in_mean = read_vec(in);
    model.codec.in_std = read_vec(in);
    model.codec.out_mean = read_vec(in);
    model.codec.out_std = read_vec(in);

    auto read_layer = [&](int dim_in, int dim_out) {
        DenseLayer layer;
        layer.in = dim_in;
        layer.out = dim_out;
        layer.w = read_vec(in);
        layer.b = read_vec(in);
        if (layer.w.size() != static_cast<std::size_t>(dim_in) * dim_out ||
            layer.b.size() != static_cast<std::size_t>(dim_out))
            throw std::runtime_error("checkpoint layer dimensions inconsistent");
        return layer;
    };
    model.params.stem = read_layer(model.params.input_dim, model.params.hidden_dim);
    for (std::uint32_t i = 0; i < n_blocks; ++i)
        model.params.blocks.push_back(read_layer(model.params.hidden_dim, model.params.hidden_dim));
    model.params.head = read_layer(model.params.hidden_dim, model.params.output_dim);
    if (!in) throw std::runtime_error("truncated checkpoint: " + path.string());
    return model;
}

}  // namespace n1grid
