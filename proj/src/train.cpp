#include "tsad/train.hpp"

#include "tsad/encode2d.hpp"
#include "tsad/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <sstream>

namespace tsad {

using ag::Shape;

void TrainConfig::validate() const {
    if (epoch < 0) throw ConfigError("train.epoch must be >= 0");
    if (epoch_gan < 0 || epoch_gan > epoch) throw ConfigError("train.epoch_gan must lie in [0, train.epoch]");
    if (batch_size < 1) throw ConfigError("train.batch_size must be positive");
    if (!(lr_vae > 0) || !(lr_gan > 0)) throw ConfigError("learning rates must be positive");
    if (!(alpha > 0) || !(beta > 0) || !(margin > 0)) throw ConfigError("alpha, beta and margin must be positive");
}

std::vector<float> WindowSet::gather(std::span<const int> indices) const {
    const std::size_t s = stride();
    std::vector<float> out(indices.size() * s);
    for (std::size_t i = 0; i < indices.size(); ++i)
        std::copy_n(data.begin() + static_cast<std::size_t>(indices[i]) * s, s, out.begin() + i * s);
    return out;
}

WindowSet make_window_set(std::span<const float> nhwc, int count, int window) {
    WindowSet set;
    set.window = window;
    set.count = count;
    set.data = HierarchicalVae<float>::to_nchw(nhwc, count, window, set.channels);
    return set;
}

Prepared prepare_series(const TimeSeries& series, int window, ImputePolicy policy,
                        const std::optional<StandardizationParams>& standardization, int step) {
    if (step < 1) throw ConfigError("window step must be >= 1");
    if (series.size() < static_cast<std::size_t>(window))
        throw InvalidInput(series.id + ": series length " + std::to_string(series.size()) +
                           " is shorter than one window (" + std::to_string(window) + ")");
    const TimeSeries clean = series.has_missing() ? impute_missing(series, policy) : series;
    Prepared out;
    TimeSeries scaled;
    if (standardization) {
        scaled = clean;
        for (double& v : scaled.values) v = standardization->apply(v);
        out.standardization = *standardization;
    } else {
        std::tie(scaled, out.standardization) = standardize(clean);
    }
    const auto nhwc = encode_series(scaled, window);
    const int count = static_cast<int>(center_range(scaled.size(), window).count());
    out.windows = make_window_set(nhwc, count, window);
    if (step > 1) {
        std::vector<int> keep;
        for (int i = 0; i < count; i += step) keep.push_back(i);
        out.windows.data = out.windows.gather(keep);
        out.windows.count = static_cast<int>(keep.size());
    }
    return out;
}

std::string to_string(Phase phase) { return phase == Phase::vae ? "vae" : "gan"; }

std::string TrainingLog::header() { return "epoch\tphase\tl_r\tl_kl\tl_d\tl_g"; }

std::string TrainingLog::format(const EpochRecord& r) {
    std::ostringstream out;
    out.precision(10);
    out << r.epoch << '\t' << to_string(r.phase) << '\t' << r.l_r << '\t' << r.l_kl << '\t';
    if (r.l_d) out << *r.l_d;
    out << '\t';
    if (r.l_g) out << *r.l_g;
    return out.str();
}

void TrainingLog::write(std::ostream& out) const {
    out << header() << '\n';
    for (const auto& r : epochs) out << format(r) << '\n';
}

// ---------------------------------------------------------------- graphs

template <class T>
ElboGraph<T> build_elbo_graph(const HierarchicalVae<T>& model, const ag::Var<T>& x, NoiseSource& noise) {
    const auto pass = model.infer(model.bottom_up(x), noise);
    const auto x_hat = model.reconstruct(pass);
    ElboGraph<T> g;
    g.recon = ag::half_squared_error(x, x_hat);
    g.kl = model.kl(pass);
    g.loss = ag::add(g.recon, g.kl);
    return g;
}

template <class T>
AdversarialGraph<T> build_adversarial_graph(const HierarchicalVae<T>& model, const ag::Var<T>& x,
                                            NoiseSource& noise, const TrainConfig& cfg,
                                            const std::pair<std::vector<T>, std::vector<T>>* frozen) {
    using Var = ag::Var<T>;
    const T alpha = static_cast<T>(cfg.alpha);
    const T beta = static_cast<T>(cfg.beta);
    const T margin = static_cast<T>(cfg.margin);
    const int batch = x.shape().n;

    AdversarialGraph<T> g;
    const auto real = model.infer(model.bottom_up(x), noise);
    g.x_hat = model.reconstruct(real);
    const auto prior = model.generate(batch, noise);
    g.x_prior = model.reconstruct(prior);

    // The re-encodings go through identity gates so the same nodes serve both
    // losses: cut for L_d, open for L_g.
    Var recon_in;
    Var prior_in;
    if (frozen) {
        recon_in = Var::constant(g.x_hat.shape(), frozen->first);
        prior_in = Var::constant(g.x_prior.shape(), frozen->second);
    } else {
        recon_in = ag::identity(g.x_hat);
        prior_in = ag::identity(g.x_prior);
        g.stop_gradient = {recon_in.node(), prior_in.node()};
    }
    g.kl_recon = model.kl(model.infer(model.bottom_up(recon_in), noise));
    g.kl_prior = model.kl(model.infer(model.bottom_up(prior_in), noise));

    g.recon = ag::half_squared_error(x, g.x_hat);
    g.kl_real = model.kl(real);
    g.disc = ag::add(ag::add(g.recon, ag::scale(g.kl_real, beta)),
                     ag::add(ag::scale(ag::hinge_below(g.kl_recon, margin), alpha),
                             ag::scale(ag::hinge_below(g.kl_prior, margin), alpha)));
    g.gen = ag::add(g.recon, ag::add(ag::scale(g.kl_recon, alpha), ag::scale(g.kl_prior, alpha)));
    return g;
}

// ---------------------------------------------------------------- trainer

template <class T>
Trainer<T>::Trainer(HierarchicalVae<T>& model, TrainConfig cfg)
    : model_(model), cfg_(cfg), noise_(cfg.seed * 2 + 1), shuffle_rng_(cfg.seed * 2 + 2) {
    cfg_.validate();
    for (auto& p : model_.parameters())
        (p.role == ParamRole::encoder ? encoder_params_ : decoder_params_).push_back(p.var);
}

template <class T>
void Trainer<T>::zero_grads() {
    for (auto& p : model_.parameters()) std::fill(p.var.mutable_grad().begin(), p.var.mutable_grad().end(), T(0));
}

template <class T>
void Trainer<T>::fail(const std::string& what) const {
    throw NumericError("non-finite loss at epoch " + std::to_string(current_epoch_) + ", batch " +
                       std::to_string(current_batch_) + ": " + what);
}

template <class T>
std::pair<double, double> Trainer<T>::vae_step(std::span<const T> nchw_batch, int batch) {
    if (!vae_opt_) {
        std::vector<ag::Var<T>> all;
        for (auto& p : model_.parameters()) all.push_back(p.var);
        vae_opt_.emplace(std::move(all), AdamaxOptions{cfg_.lr_vae});
    }
    const int n = model_.arch().window;
    auto x = ag::Var<T>::constant(Shape{batch, model_.arch().in_channels, n, n},
                                  std::vector<T>(nchw_batch.begin(), nchw_batch.end()));
    const auto g = build_elbo_graph(model_, x, noise_);
    const double lr = g.recon.item();
    const double lkl = g.kl.item();
    if (!std::isfinite(lr) || !std::isfinite(lkl))
        fail("L_r=" + std::to_string(lr) + " L_KL=" + std::to_string(lkl));
    zero_grads();
    ag::backward(g.loss);
    vae_opt_->step();
    return {lr, lkl};
}

template <class T>
AdversarialLosses Trainer<T>::adversarial_step(std::span<const T> nchw_batch, int batch) {
    if (!enc_opt_) {
        enc_opt_.emplace(encoder_params_, AdamaxOptions{cfg_.lr_gan});
        dec_opt_.emplace(decoder_params_, AdamaxOptions{cfg_.lr_gan});
    }
    const int n = model_.arch().window;
    auto x = ag::Var<T>::constant(Shape{batch, model_.arch().in_channels, n, n},
                                  std::vector<T>(nchw_batch.begin(), nchw_batch.end()));
    const auto g = build_adversarial_graph(model_, x, noise_, cfg_);
    AdversarialLosses out{g.recon.item(), g.kl_real.item(), g.kl_recon.item(),
                          g.kl_prior.item(), g.disc.item(), g.gen.item()};
    if (!std::isfinite(out.l_d) || !std::isfinite(out.l_g))
        fail("L_r=" + std::to_string(out.l_r) + " L_KL=" + std::to_string(out.l_kl) +
             " L_KL(rec)=" + std::to_string(out.kl_recon) + " L_KL(prior)=" + std::to_string(out.kl_prior) +
             " L_d=" + std::to_string(out.l_d) + " L_g=" + std::to_string(out.l_g));

    zero_grads();
    ag::backward(g.disc, g.stop_gradient);
    std::vector<ag::Buffer<T>> enc_grads;
    enc_grads.reserve(encoder_params_.size());
    for (auto& p : encoder_params_) enc_grads.push_back(p.mutable_grad());

    zero_grads();
    ag::backward(g.gen);
    for (std::size_t i = 0; i < encoder_params_.size(); ++i) encoder_params_[i].mutable_grad() = enc_grads[i];

    enc_opt_->step();
    dec_opt_->step();
    return out;
}

template <class T>
std::vector<std::vector<int>> Trainer<T>::shuffled_batches(int count) {
    std::vector<int> order(count);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), shuffle_rng_);
    std::vector<std::vector<int>> batches;
    for (int i = 0; i < count; i += cfg_.batch_size)
        batches.emplace_back(order.begin() + i, order.begin() + std::min(count, i + cfg_.batch_size));
    return batches;
}

namespace {

template <class T>
std::vector<T> convert(std::vector<float> v) {
    if constexpr (std::is_same_v<T, float>) {
        return v;
    } else {
        return std::vector<T>(v.begin(), v.end());
    }
}

}  // namespace

template <class T>
EpochRecord Trainer<T>::vae_epoch(const WindowSet& data, int epoch) {
    if (data.count < 1) throw InvalidInput("training data is empty");
    current_epoch_ = epoch;
    EpochRecord rec;
    rec.epoch = epoch;
    rec.phase = Phase::vae;
    current_batch_ = 0;
    for (const auto& idx : shuffled_batches(data.count)) {
        ++current_batch_;
        const auto batch = convert<T>(data.gather(idx));
        const auto [lr, lkl] = vae_step(batch, static_cast<int>(idx.size()));
        rec.l_r += lr;
        rec.l_kl += lkl;
    }
    rec.l_r /= data.count;
    rec.l_kl /= data.count;
    return rec;
}

template <class T>
EpochRecord Trainer<T>::adversarial_epoch(const WindowSet& data, int epoch) {
    if (data.count < 1) throw InvalidInput("training data is empty");
    current_epoch_ = epoch;
    EpochRecord rec;
    rec.epoch = epoch;
    rec.phase = Phase::gan;
    double ld = 0.0;
    double lg = 0.0;
    current_batch_ = 0;
    for (const auto& idx : shuffled_batches(data.count)) {
        ++current_batch_;
        const auto batch = convert<T>(data.gather(idx));
        const auto losses = adversarial_step(batch, static_cast<int>(idx.size()));
        rec.l_r += losses.l_r;
        rec.l_kl += losses.l_kl;
        ld += losses.l_d;
        lg += losses.l_g;
    }
    rec.l_r /= data.count;
    rec.l_kl /= data.count;
    rec.l_d = ld / data.count;
    rec.l_g = lg / data.count;
    return rec;
}

TrainingLog train_phases(HierarchicalVae<float>& model, const WindowSet& data, const TrainConfig& cfg,
                         const std::function<void(const EpochRecord&)>& on_epoch) {
    cfg.validate();
    if (data.window != model.arch().window)
        throw InvalidInput("window set uses N=" + std::to_string(data.window) + " but the model expects N=" +
                           std::to_string(model.arch().window));
    Trainer<float> trainer(model, cfg);
    TrainingLog log;
    for (int e = 1; e <= cfg.epoch; ++e) {
        const bool gan = e > cfg.vae_epochs();
        auto rec = gan ? trainer.adversarial_epoch(data, e) : trainer.vae_epoch(data, e);
        log.epochs.push_back(rec);
        if (on_epoch) on_epoch(rec);
    }
    return log;
}

TrainingLog train_vae_phase(HierarchicalVae<float>& model, const WindowSet& data, const TrainConfig& cfg,
                            int epochs) {
    Trainer<float> trainer(model, cfg);
    TrainingLog log;
    for (int e = 1; e <= epochs; ++e) log.epochs.push_back(trainer.vae_epoch(data, e));
    return log;
}

FitResult fit(const TimeSeries& series, const TrainConfig& cfg, const ArchConfig& arch, ImputePolicy policy,
              const std::function<void(const EpochRecord&, const HierarchicalVae<float>&)>& on_epoch, int step) {
    cfg.validate();
    auto prepared = prepare_series(series, arch.window, policy, std::nullopt, step);
    FitResult result{HierarchicalVae<float>(arch, cfg.seed), prepared.standardization, {}};
    std::function<void(const EpochRecord&)> hook;
    if (on_epoch) hook = [&](const EpochRecord& r) { on_epoch(r, result.model); };
    result.log = train_phases(result.model, prepared.windows, cfg, hook);
    return result;
}

template struct ElboGraph<float>;
template struct ElboGraph<double>;
template ElboGraph<float> build_elbo_graph<float>(const HierarchicalVae<float>&, const ag::Var<float>&, NoiseSource&);
template ElboGraph<double> build_elbo_graph<double>(const HierarchicalVae<double>&, const ag::Var<double>&,
                                                    NoiseSource&);
template AdversarialGraph<float> build_adversarial_graph<float>(const HierarchicalVae<float>&, const ag::Var<float>&,
                                                                NoiseSource&, const TrainConfig&,
                                                                const std::pair<std::vector<float>, std::vector<float>>*);
template AdversarialGraph<double> build_adversarial_graph<double>(
    const HierarchicalVae<double>&, const ag::Var<double>&, NoiseSource&, const TrainConfig&,
    const std::pair<std::vector<double>, std::vector<double>>*);
template class Trainer<float>;
template class Trainer<double>;

}  // namespace tsad
