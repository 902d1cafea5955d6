#pragma once

#include "tsad/hvae.hpp"
#include "tsad/ingest.hpp"
#include "tsad/optim.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <random>
#include <string>
#include <unordered_set>
#include <vector>

namespace tsad {

struct TrainConfig {
    int epoch = 50;
    int epoch_gan = 5;
    int batch_size = 128;
    double lr_vae = 1e-3;
    double lr_gan = 1e-4;
    double alpha = 0.005;
    double beta = 0.1;
    double margin = 10.0;
    std::uint64_t seed = 0;

    int vae_epochs() const { return epoch - epoch_gan; }
    void validate() const;
};

// Encoded windows of one series in [count, C, N, N] layout.
struct WindowSet {
    int window = 0;
    int channels = 2;
    int count = 0;
    std::vector<float> data;

    std::size_t stride() const { return static_cast<std::size_t>(channels) * window * window; }
    std::vector<float> gather(std::span<const int> indices) const;
};

// Standardize (after imputation) and encode the windows at centers first,
// first + step, ... of `series`.
struct Prepared {
    WindowSet windows;
    StandardizationParams standardization;
};
Prepared prepare_series(const TimeSeries& series, int window, ImputePolicy policy = ImputePolicy::linear,
                        const std::optional<StandardizationParams>& standardization = std::nullopt,
                        int step = 1);
WindowSet make_window_set(std::span<const float> nhwc, int count, int window);

enum class Phase { vae, gan };
std::string to_string(Phase phase);

struct EpochRecord {
    int epoch = 0;  // 1-based
    Phase phase = Phase::vae;
    double l_r = 0.0;   // per-window means
    double l_kl = 0.0;
    std::optional<double> l_d;
    std::optional<double> l_g;
};

struct TrainingLog {
    std::vector<EpochRecord> epochs;

    // Tab-separated: epoch, phase, l_r, l_kl, l_d, l_g (blank where not applicable).
    void write(std::ostream& out) const;
    static std::string header();
    static std::string format(const EpochRecord& record);
};

// Loss terms of one ELBO evaluation on a batch.
template <class T>
struct ElboGraph {
    ag::Var<T> recon;  // L_r
    ag::Var<T> kl;     // L_KL
    ag::Var<T> loss;   // L_r + L_KL
};

template <class T>
ElboGraph<T> build_elbo_graph(const HierarchicalVae<T>& model, const ag::Var<T>& x, NoiseSource& noise);

// Loss terms of one adversarial step. The encoder gradient is taken from
// `disc` with `stop_gradient` cut (the ng(.) edges into the re-encoding of
// the reconstructions); the decoder gradient from `gen` without a cut.
template <class T>
struct AdversarialGraph {
    ag::Var<T> recon;      // L_r(x, x_hat)
    ag::Var<T> kl_real;    // L_KL(x, Enc(x))
    ag::Var<T> kl_recon;   // L_KL(x_hat, Enc(x_hat))
    ag::Var<T> kl_prior;   // L_KL(x_p, Enc(x_p))
    ag::Var<T> disc;       // L_d
    ag::Var<T> gen;        // L_g
    ag::Var<T> x_hat;
    ag::Var<T> x_prior;
    std::unordered_set<const ag::Node<T>*> stop_gradient;
};

// `frozen` replaces the re-encoded inputs by constants (used to evaluate L_d
// with the reconstructions held fixed, e.g. for finite differences).
template <class T>
AdversarialGraph<T> build_adversarial_graph(const HierarchicalVae<T>& model, const ag::Var<T>& x,
                                            NoiseSource& noise, const TrainConfig& cfg,
                                            const std::pair<std::vector<T>, std::vector<T>>* frozen = nullptr);

struct AdversarialLosses {
    double l_r = 0.0;
    double l_kl = 0.0;
    double kl_recon = 0.0;
    double kl_prior = 0.0;
    double l_d = 0.0;
    double l_g = 0.0;
};

// Owns the optimizer state for one model. Updates are strictly sequential.
template <class T>
class Trainer {
public:
    Trainer(HierarchicalVae<T>& model, TrainConfig cfg);

    // One joint update of all parameters on L = L_r + L_KL. Returns (L_r, L_KL).
    std::pair<double, double> vae_step(std::span<const T> nchw_batch, int batch);
    // Encoder update on L_d, then decoder update on L_g, both from one forward pass.
    AdversarialLosses adversarial_step(std::span<const T> nchw_batch, int batch);

    EpochRecord vae_epoch(const WindowSet& data, int epoch);
    EpochRecord adversarial_epoch(const WindowSet& data, int epoch);

private:
    std::vector<std::vector<int>> shuffled_batches(int count);
    void zero_grads();
    [[noreturn]] void fail(const std::string& what) const;

    HierarchicalVae<T>& model_;
    TrainConfig cfg_;
    NoiseSource noise_;
    std::mt19937_64 shuffle_rng_;
    std::vector<ag::Var<T>> encoder_params_;
    std::vector<ag::Var<T>> decoder_params_;
    std::optional<Adamax<T>> vae_opt_;
    std::optional<Adamax<T>> enc_opt_;
    std::optional<Adamax<T>> dec_opt_;
    int current_epoch_ = 0;
    int current_batch_ = 0;
};

// Runs `vae_epochs` then `epoch_gan` adversarial epochs over the same window set.
TrainingLog train_phases(HierarchicalVae<float>& model, const WindowSet& data, const TrainConfig& cfg,
                         const std::function<void(const EpochRecord&)>& on_epoch = {});

// Joint updates only; zero epochs leave the model untouched.
TrainingLog train_vae_phase(HierarchicalVae<float>& model, const WindowSet& data, const TrainConfig& cfg, int epochs);

struct FitResult {
    HierarchicalVae<float> model;
    StandardizationParams standardization;
    TrainingLog log;
};

// Preprocess, initialize from cfg.seed and train with the phase schedule.
FitResult fit(const TimeSeries& series, const TrainConfig& cfg, const ArchConfig& arch,
              ImputePolicy policy = ImputePolicy::linear,
              const std::function<void(const EpochRecord&, const HierarchicalVae<float>&)>& on_epoch = {},
              int step = 1);

}  // namespace tsad
