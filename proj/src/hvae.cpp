#include "tsad/hvae.hpp"

#include "tsad/error.hpp"

#include <cmath>

namespace tsad {

using ag::Shape;

namespace {

constexpr double kNormEps = 1e-5;

}  // namespace

// ---------------------------------------------------------------- config

void ArchConfig::validate() const {
    if (window <= 0 || window % 2 != 0) throw ConfigError("window must be a positive even integer");
    if (in_channels <= 0) throw ConfigError("in_channels must be positive");
    if (groups.empty()) throw ConfigError("at least one latent group is required");
    if (!(sigma_floor > 0.0)) throw ConfigError("sigma_floor must be positive");
    const int top = top_level();
    if (top < 0 || (window >> top) < 1 || ((window >> top) << top) != window)
        throw ConfigError("window " + std::to_string(window) + " is not divisible by 2^" + std::to_string(top));
    if (static_cast<int>(level_channels.size()) != top + 1)
        throw ConfigError("level_channels needs " + std::to_string(top + 1) + " entries (levels 0.." +
                          std::to_string(top) + ")");
    for (int c : level_channels)
        if (c <= 0) throw ConfigError("level_channels entries must be positive");
    if (cells_per_level.size() != level_channels.size())
        throw ConfigError("cells_per_level needs one entry per level");
    for (int c : cells_per_level)
        if (c < 0) throw ConfigError("cells_per_level entries must be >= 0");
    for (std::size_t g = 0; g < groups.size(); ++g) {
        if (groups[g].channels <= 0) throw ConfigError("group channels must be positive");
        if (groups[g].level < 0) throw ConfigError("group level must be >= 0");
        if (g > 0 && groups[g].level > groups[g - 1].level)
            throw ConfigError("groups must be ordered from lowest to highest resolution");
    }
}

LatentGroupSpec ArchConfig::group_spec() const {
    LatentGroupSpec spec;
    spec.group_count = static_cast<int>(groups.size());
    for (const auto& g : groups) {
        const int side = resolution(g.level);
        spec.dims.push_back(g.channels * side * side);
    }
    return spec;
}

ArchConfig ArchConfig::miniature() {
    ArchConfig a;
    a.window = 8;
    a.level_channels = {3, 3, 3, 3};
    a.cells_per_level = {1, 1, 1, 1};
    a.groups = {{3, 4}, {3, 2}};
    return a;
}

// ---------------------------------------------------------------- scalar losses

double kl_variable(double /*mu*/, double sigma, double delta_mu, double delta_sigma) {
    if (!(sigma > 0.0) || !(delta_sigma > 0.0)) throw InvalidInput("kl_variable: scales must be positive");
    return 0.5 * (delta_mu * delta_mu / (sigma * sigma) + delta_sigma * delta_sigma -
                  std::log(delta_sigma * delta_sigma) - 1.0);
}

template <class T>
double kl_total(const LatentState<T>& state) {
    double total = 0.0;
    for (const auto& d : state.group_dists)
        for (std::size_t i = 0; i < d.delta_mu.size(); ++i)
            total += kl_variable(d.mu[i], d.sigma[i], d.delta_mu[i], d.delta_sigma[i]);
    return total;
}

namespace {

template <class T>
double recon_loss_impl(std::span<const T> x, std::span<const T> x_hat) {
    if (x.size() != x_hat.size())
        throw InvalidInput("recon_loss: size mismatch " + std::to_string(x.size()) + " vs " +
                           std::to_string(x_hat.size()));
    double acc = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double d = static_cast<double>(x[i]) - static_cast<double>(x_hat[i]);
        acc += d * d;
    }
    return 0.5 * acc;
}

}  // namespace

double recon_loss(std::span<const float> x, std::span<const float> x_hat) { return recon_loss_impl(x, x_hat); }
double recon_loss(std::span<const double> x, std::span<const double> x_hat) { return recon_loss_impl(x, x_hat); }

template <class T>
double elbo_loss(std::span<const T> x, std::span<const T> x_hat, const LatentState<T>& state) {
    return recon_loss(x, x_hat) + kl_total(state);
}

// ---------------------------------------------------------------- model

template <class T>
HierarchicalVae<T>::HierarchicalVae(ArchConfig arch, std::uint64_t seed)
    : arch_(std::move(arch)), init_rng_(seed) {
    arch_.validate();
    const auto& ch = arch_.level_channels;
    const int top = arch_.top_level();
    const auto& cells = arch_.cells_per_level;
    const double he = std::sqrt(2.0);

    stem_ = make_conv("enc.stem", ParamRole::encoder, arch_.in_channels, ch[0], 3, 1, he);
    enc_cells_.resize(top + 1);
    for (int l = 0; l <= top; ++l) {
        for (int c = 0; c < cells[l]; ++c)
            enc_cells_[l].push_back(
                make_cell("enc.l" + std::to_string(l) + ".cell" + std::to_string(c), ParamRole::encoder, ch[l]));
        if (l < top)
            down_.push_back(make_conv("enc.down" + std::to_string(l), ParamRole::encoder, ch[l], ch[l + 1], 3, 2, he));
    }

    {
        const int side = arch_.resolution(top);
        const Shape s{1, ch[top], side, side};
        std::normal_distribution<double> normal(0.0, 0.1);
        std::vector<T> v(s.size());
        for (auto& x : v) x = static_cast<T>(normal(init_rng_));
        top_state_ = Var::parameter(s, std::move(v));
        params_.push_back({"dec.top_state", ParamRole::decoder, top_state_});
    }

    const int groups = static_cast<int>(arch_.groups.size());
    group_cells_.resize(groups + 1);
    for (int g = 0; g < groups; ++g) {
        const auto& p = arch_.groups[g];
        const int c = ch[p.level];
        const std::string name = "group" + std::to_string(g);
        if (g > 0) {
            // cells before group g run at the previous group's level
            const int prev = arch_.groups[g - 1].level;
            for (int i = 0; i < cells[prev]; ++i)
                group_cells_[g].push_back(make_cell("dec." + name + ".cell" + std::to_string(i), ParamRole::decoder, ch[prev]));
        }
        GroupHeads heads;
        heads.posterior = make_conv("enc." + name + ".posterior", ParamRole::encoder, 2 * c, 2 * p.channels, 3, 1, 0.1);
        if (g > 0) heads.prior = make_conv("dec." + name + ".prior", ParamRole::decoder, c, 2 * p.channels, 3, 1, 0.1);
        heads.merge = make_conv("dec." + name + ".merge", ParamRole::decoder, p.channels, c, 1, 1, 1.0);
        heads_.push_back(std::move(heads));
    }
    {
        const int last = arch_.groups.back().level;
        for (int i = 0; i < cells[last]; ++i)
            group_cells_[groups].push_back(make_cell("dec.final.cell" + std::to_string(i), ParamRole::decoder, ch[last]));
    }

    up_.resize(top);
    up_cells_.resize(top);
    for (int l = top - 1; l >= 0; --l) {
        up_[l] = make_conv("dec.up" + std::to_string(l), ParamRole::decoder, ch[l + 1], ch[l], 3, 1, he);
        for (int i = 0; i < cells[l]; ++i)
            up_cells_[l].push_back(
                make_cell("dec.l" + std::to_string(l) + ".cell" + std::to_string(i), ParamRole::decoder, ch[l]));
    }
    output_ = make_conv("dec.output", ParamRole::decoder, ch[0], arch_.in_channels, 3, 1, 1.0);
}

template <class T>
typename HierarchicalVae<T>::Conv HierarchicalVae<T>::make_conv(const std::string& name, ParamRole role, int in,
                                                                int out, int k, int stride, double gain) {
    const Shape ws{out, in, k, k};
    const double stddev = gain / std::sqrt(static_cast<double>(in) * k * k);
    std::normal_distribution<double> normal(0.0, stddev);
    std::vector<T> w(ws.size());
    for (auto& v : w) v = static_cast<T>(normal(init_rng_));
    Conv conv;
    conv.weight = Var::parameter(ws, std::move(w));
    conv.bias = Var::parameter(Shape{1, out, 1, 1}, std::vector<T>(out, T(0)));
    conv.stride = stride;
    conv.pad = k / 2;
    params_.push_back({name + ".w", role, conv.weight});
    params_.push_back({name + ".b", role, conv.bias});
    return conv;
}

template <class T>
typename HierarchicalVae<T>::Cell HierarchicalVae<T>::make_cell(const std::string& name, ParamRole role,
                                                                int channels) {
    Cell cell;
    cell.gamma = Var::parameter(Shape{1, channels, 1, 1}, std::vector<T>(channels, T(1)));
    cell.beta = Var::parameter(Shape{1, channels, 1, 1}, std::vector<T>(channels, T(0)));
    params_.push_back({name + ".norm.gamma", role, cell.gamma});
    params_.push_back({name + ".norm.beta", role, cell.beta});
    {
        const Shape ws{channels, 1, 3, 3};
        std::normal_distribution<double> normal(0.0, 1.0 / 3.0);
        std::vector<T> w(ws.size());
        for (auto& v : w) v = static_cast<T>(normal(init_rng_));
        cell.dw_weight = Var::parameter(ws, std::move(w));
        cell.dw_bias = Var::parameter(Shape{1, channels, 1, 1}, std::vector<T>(channels, T(0)));
        params_.push_back({name + ".dw.w", role, cell.dw_weight});
        params_.push_back({name + ".dw.b", role, cell.dw_bias});
    }
    cell.pointwise = make_conv(name + ".pw", role, channels, channels, 1, 1, 0.5);
    return cell;
}

template <class T>
std::size_t HierarchicalVae<T>::parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.var.value().size();
    return n;
}

template <class T>
std::vector<std::vector<T>> HierarchicalVae<T>::snapshot() const {
    std::vector<std::vector<T>> out;
    out.reserve(params_.size());
    for (const auto& p : params_) out.emplace_back(p.var.value().begin(), p.var.value().end());
    return out;
}

template <class T>
void HierarchicalVae<T>::restore(const std::vector<std::vector<T>>& values) {
    if (values.size() != params_.size()) throw InvalidInput("restore: parameter count mismatch");
    for (std::size_t i = 0; i < values.size(); ++i) {
        auto& dst = params_[i].var.mutable_value();
        if (dst.size() != values[i].size())
            throw InvalidInput("restore: size mismatch for " + params_[i].name);
        dst.assign(values[i].begin(), values[i].end());
    }
}

template <class T>
ag::Var<T> HierarchicalVae<T>::apply(const Conv& conv, const Var& x) const {
    return ag::conv2d(x, conv.weight, conv.bias, conv.stride, conv.pad);
}

// x + silu(pointwise(depthwise(norm(x))))
template <class T>
ag::Var<T> HierarchicalVae<T>::apply(const Cell& cell, const Var& x) const {
    auto y = ag::layer_norm(x, cell.gamma, cell.beta, static_cast<T>(kNormEps));
    y = ag::depthwise_conv2d(y, cell.dw_weight, cell.dw_bias);
    y = apply(cell.pointwise, y);
    return ag::add(x, ag::silu(y));
}

template <class T>
ag::Var<T> HierarchicalVae<T>::apply_cells(const std::vector<Cell>& cells, Var x) const {
    for (const auto& c : cells) x = apply(c, x);
    return x;
}

template <class T>
ag::Var<T> HierarchicalVae<T>::up(int to_level, const Var& x) const {
    auto y = ag::silu(apply(up_[to_level], ag::upsample2x(x)));
    return apply_cells(up_cells_[to_level], y);
}

template <class T>
ag::Var<T> HierarchicalVae<T>::initial_state(int batch) const {
    return ag::expand_batch(top_state_, batch);
}

template <class T>
ag::Var<T> HierarchicalVae<T>::sample(const Var& mean, const Var& stddev, NoiseSource& noise) const {
    if (noise.deterministic()) return mean;
    auto eps = Var::constant(mean.shape(), noise.draw<T>(mean.shape().size()));
    return ag::add(mean, ag::mul(stddev, eps));
}

template <class T>
void HierarchicalVae<T>::check_input(const Var& x) const {
    const Shape s = x.shape();
    if (s.c != arch_.in_channels || s.h != arch_.window || s.w != arch_.window || s.n < 1)
        throw InvalidInput("model expects [B," + std::to_string(arch_.in_channels) + "," +
                           std::to_string(arch_.window) + "," + std::to_string(arch_.window) + "] input, got " +
                           ag::to_string(s));
}

template <class T>
std::vector<ag::Var<T>> HierarchicalVae<T>::bottom_up(const Var& x) const {
    check_input(x);
    const int top = arch_.top_level();
    std::vector<Var> feats(top + 1);
    auto h = ag::silu(apply(stem_, x));
    feats[0] = apply_cells(enc_cells_[0], h);
    for (int l = 0; l < top; ++l) {
        h = ag::silu(apply(down_[l], feats[l]));
        feats[l + 1] = apply_cells(enc_cells_[l + 1], h);
    }
    std::vector<Var> out;
    for (const auto& g : arch_.groups) out.push_back(feats[g.level]);
    return out;
}

template <class T>
typename HierarchicalVae<T>::Pass HierarchicalVae<T>::infer(const std::vector<Var>& group_features,
                                                            NoiseSource& noise) const {
    const int groups = static_cast<int>(arch_.groups.size());
    if (static_cast<int>(group_features.size()) != groups) throw InvalidInput("infer: one feature per group required");
    const int batch = group_features.front().shape().n;
    const T floor = static_cast<T>(arch_.sigma_floor);
    Pass pass;
    auto h = initial_state(batch);
    int level = arch_.top_level();
    for (int g = 0; g < groups; ++g) {
        const auto& p = arch_.groups[g];
        if (g > 0) {
            h = apply_cells(group_cells_[g], h);
            while (level > p.level) h = up(--level, h);
        }
        if (!(group_features[g].shape() == h.shape()))
            throw InvalidInput("infer: feature " + ag::to_string(group_features[g].shape()) + " for group " +
                               std::to_string(g) + " does not match state " + ag::to_string(h.shape()));
        const Shape zs{batch, p.channels, h.shape().h, h.shape().w};
        GroupTerms t;
        if (g == 0) {
            t.mu = Var::constant(zs, T(0));
            t.sigma = Var::constant(zs, T(1));
        } else {
            auto prior = apply(heads_[g].prior, h);
            t.mu = ag::slice_channels(prior, 0, p.channels);
            t.sigma = ag::exp_floor(ag::slice_channels(prior, p.channels, p.channels), floor);
        }
        auto post = apply(heads_[g].posterior, ag::concat_channels(h, group_features[g]));
        t.delta_mu = ag::slice_channels(post, 0, p.channels);
        t.delta_sigma = ag::exp_floor(ag::slice_channels(post, p.channels, p.channels), floor);
        t.z = sample(ag::add(t.mu, t.delta_mu), ag::mul(t.sigma, t.delta_sigma), noise);
        h = ag::add(h, apply(heads_[g].merge, t.z));
        pass.groups.push_back(std::move(t));
    }
    pass.state = h;
    return pass;
}

template <class T>
typename HierarchicalVae<T>::Pass HierarchicalVae<T>::generate(int batch, NoiseSource& noise) const {
    if (batch < 1) throw InvalidInput("generate: batch must be positive");
    const T floor = static_cast<T>(arch_.sigma_floor);
    Pass pass;
    auto h = initial_state(batch);
    int level = arch_.top_level();
    for (std::size_t g = 0; g < arch_.groups.size(); ++g) {
        const auto& p = arch_.groups[g];
        if (g > 0) {
            h = apply_cells(group_cells_[g], h);
            while (level > p.level) h = up(--level, h);
        }
        const Shape zs{batch, p.channels, h.shape().h, h.shape().w};
        GroupTerms t;
        if (g == 0) {
            t.mu = Var::constant(zs, T(0));
            t.sigma = Var::constant(zs, T(1));
        } else {
            auto prior = apply(heads_[g].prior, h);
            t.mu = ag::slice_channels(prior, 0, p.channels);
            t.sigma = ag::exp_floor(ag::slice_channels(prior, p.channels, p.channels), floor);
        }
        t.z = sample(t.mu, t.sigma, noise);
        h = ag::add(h, apply(heads_[g].merge, t.z));
        pass.groups.push_back(std::move(t));
    }
    pass.state = h;
    return pass;
}

template <class T>
typename HierarchicalVae<T>::Pass HierarchicalVae<T>::replay(const std::vector<Var>& samples) const {
    if (samples.size() != arch_.groups.size())
        throw InvalidInput("decode: expected " + std::to_string(arch_.groups.size()) + " latent groups, got " +
                           std::to_string(samples.size()));
    const int batch = samples.front().shape().n;
    Pass pass;
    auto h = initial_state(batch);
    int level = arch_.top_level();
    for (std::size_t g = 0; g < arch_.groups.size(); ++g) {
        const auto& p = arch_.groups[g];
        if (g > 0) {
            h = apply_cells(group_cells_[g], h);
            while (level > p.level) h = up(--level, h);
        }
        const Shape zs{batch, p.channels, h.shape().h, h.shape().w};
        if (!(samples[g].shape() == zs))
            throw InvalidInput("decode: group " + std::to_string(g) + " sample has shape " +
                               ag::to_string(samples[g].shape()) + ", expected " + ag::to_string(zs));
        GroupTerms t;
        t.z = samples[g];
        h = ag::add(h, apply(heads_[g].merge, t.z));
        pass.groups.push_back(std::move(t));
    }
    pass.state = h;
    return pass;
}

template <class T>
ag::Var<T> HierarchicalVae<T>::reconstruct(const Pass& pass) const {
    auto h = apply_cells(group_cells_.back(), pass.state);
    for (int level = arch_.groups.back().level; level > 0;) h = up(--level, h);
    return apply(output_, h);
}

template <class T>
ag::Var<T> HierarchicalVae<T>::kl(const Pass& pass) const {
    Var total;
    for (const auto& t : pass.groups) {
        if (!t.delta_mu.defined()) throw InvalidInput("kl: pass carries no posterior terms");
        auto term = ag::kl_residual(t.delta_mu, t.sigma, t.delta_sigma);
        total = total.defined() ? ag::add(total, term) : term;
    }
    return total;
}

template <class T>
std::vector<T> HierarchicalVae<T>::to_nchw(std::span<const T> nhwc, int batch, int n, int channels) {
    const std::size_t plane = static_cast<std::size_t>(n) * n;
    if (nhwc.size() != static_cast<std::size_t>(batch) * plane * channels)
        throw InvalidInput("tensor size " + std::to_string(nhwc.size()) + " does not match [" + std::to_string(batch) +
                           "," + std::to_string(n) + "," + std::to_string(n) + "," + std::to_string(channels) + "]");
    std::vector<T> out(nhwc.size());
    for (int b = 0; b < batch; ++b)
        for (std::size_t p = 0; p < plane; ++p)
            for (int c = 0; c < channels; ++c)
                out[(b * channels + c) * plane + p] = nhwc[(b * plane + p) * channels + c];
    return out;
}

template <class T>
std::vector<T> HierarchicalVae<T>::to_nhwc(std::span<const T> nchw, int batch, int n, int channels) {
    const std::size_t plane = static_cast<std::size_t>(n) * n;
    std::vector<T> out(nchw.size());
    for (int b = 0; b < batch; ++b)
        for (std::size_t p = 0; p < plane; ++p)
            for (int c = 0; c < channels; ++c)
                out[(b * plane + p) * channels + c] = nchw[(b * channels + c) * plane + p];
    return out;
}

template <class T>
LatentState<T> HierarchicalVae<T>::encode(std::span<const T> x, int batch, NoiseSource& noise) const {
    ag::NoGradGuard no_grad;
    const int n = arch_.window;
    auto input = Var::constant(Shape{batch, arch_.in_channels, n, n}, to_nchw(x, batch, n, arch_.in_channels));
    const auto pass = infer(bottom_up(input), noise);
    LatentState<T> state;
    state.batch = batch;
    for (const auto& t : pass.groups) {
        state.samples.emplace_back(t.z.value().begin(), t.z.value().end());
        GroupDistribution<T> d;
        d.mu.assign(t.mu.value().begin(), t.mu.value().end());
        d.sigma.assign(t.sigma.value().begin(), t.sigma.value().end());
        d.delta_mu.assign(t.delta_mu.value().begin(), t.delta_mu.value().end());
        d.delta_sigma.assign(t.delta_sigma.value().begin(), t.delta_sigma.value().end());
        state.group_dists.push_back(std::move(d));
    }
    return state;
}

template <class T>
LatentState<T> HierarchicalVae<T>::sample_prior(int batch, NoiseSource& noise) const {
    ag::NoGradGuard no_grad;
    const auto pass = generate(batch, noise);
    LatentState<T> state;
    state.batch = batch;
    for (const auto& t : pass.groups) {
        state.samples.emplace_back(t.z.value().begin(), t.z.value().end());
        GroupDistribution<T> d;
        d.mu.assign(t.mu.value().begin(), t.mu.value().end());
        d.sigma.assign(t.sigma.value().begin(), t.sigma.value().end());
        d.delta_mu.assign(d.mu.size(), T(0));
        d.delta_sigma.assign(d.mu.size(), T(1));
        state.group_dists.push_back(std::move(d));
    }
    return state;
}

template <class T>
std::vector<T> HierarchicalVae<T>::decode(const LatentState<T>& z) const {
    ag::NoGradGuard no_grad;
    if (z.samples.size() != arch_.groups.size())
        throw InvalidInput("decode: expected " + std::to_string(arch_.groups.size()) + " latent groups");
    std::vector<Var> samples;
    for (std::size_t g = 0; g < arch_.groups.size(); ++g) {
        const auto& p = arch_.groups[g];
        const int side = arch_.resolution(p.level);
        const Shape s{z.batch, p.channels, side, side};
        if (z.samples[g].size() != s.size())
            throw InvalidInput("decode: group " + std::to_string(g) + " has " + std::to_string(z.samples[g].size()) +
                               " values, expected " + std::to_string(s.size()));
        samples.push_back(Var::constant(s, z.samples[g]));
    }
    const auto out = reconstruct(replay(samples));
    return to_nhwc(out.value(), z.batch, arch_.window, arch_.in_channels);
}

template class HierarchicalVae<float>;
template class HierarchicalVae<double>;
template double kl_total<float>(const LatentState<float>&);
template double kl_total<double>(const LatentState<double>&);
template double elbo_loss<float>(std::span<const float>, std::span<const float>, const LatentState<float>&);
template double elbo_loss<double>(std::span<const double>, std::span<const double>, const LatentState<double>&);

}  // namespace tsad
