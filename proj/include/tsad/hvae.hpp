#pragma once

// Hierarchical VAE over 2-channel window images.
//
// A bottom-up convolutional encoder extracts features at decreasing
// resolutions. A top-down network, shared by inference and generation, walks
// the latent groups from the most abstract (lowest resolution) to the most
// detailed. For group g it predicts the prior N(mu, sigma) from the running
// state, the encoder adds a residual (delta_mu, delta_sigma) from the features
// at that resolution, and the sampled z_g is merged back into the state. After
// the last group the state is upsampled to the window resolution and mapped
// to the reconstruction.

#include "tsad/autograd.hpp"

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace tsad {

// A latent group lives on a square map of side (window >> level) with
// `channels` channels; its flattened size is channels * side^2.
struct GroupPlacement {
    int level = 0;
    int channels = 1;
    friend bool operator==(const GroupPlacement&, const GroupPlacement&) = default;
};

struct LatentGroupSpec {
    int group_count = 0;
    std::vector<int> dims;
};

struct ArchConfig {
    int window = 64;
    int in_channels = 2;
    // Feature channels at each level; level l has resolution window >> l.
    std::vector<int> level_channels{8, 16, 16, 32, 32};
    // Residual cells per level (same indexing as level_channels).
    std::vector<int> cells_per_level{1, 1, 1, 1, 1};
    // Ordered top (most abstract) to bottom. Flattened sizes 512, 256, 128.
    std::vector<GroupPlacement> groups{{4, 32}, {3, 4}, {3, 2}};
    double sigma_floor = 1e-6;

    void validate() const;
    int top_level() const { return groups.front().level; }
    int resolution(int level) const { return window >> level; }
    LatentGroupSpec group_spec() const;

    // Smallest architecture used by gradient checks: N=8, G=2, dims [4, 2].
    static ArchConfig miniature();

    friend bool operator==(const ArchConfig&, const ArchConfig&) = default;
};

// Per-group distribution parameters, flattened over [batch, channels, side, side].
template <class T>
struct GroupDistribution {
    std::vector<T> mu;
    std::vector<T> sigma;
    std::vector<T> delta_mu;
    std::vector<T> delta_sigma;
};

template <class T>
struct LatentState {
    int batch = 0;
    std::vector<std::vector<T>> samples;  // one per group, top to bottom
    std::vector<GroupDistribution<T>> group_dists;
};

// KL between the residual posterior N(mu + delta_mu, sigma * delta_sigma) and
// the prior N(mu, sigma) for one variable. `mu` cancels out.
double kl_variable(double mu, double sigma, double delta_mu, double delta_sigma);

template <class T>
double kl_total(const LatentState<T>& state);

// 0.5 * sum (x - x_hat)^2 over every entry.
double recon_loss(std::span<const float> x, std::span<const float> x_hat);
double recon_loss(std::span<const double> x, std::span<const double> x_hat);

template <class T>
double elbo_loss(std::span<const T> x, std::span<const T> x_hat, const LatentState<T>& state);

// Source of the standard-normal draws used by the reparameterization.
// A default-constructed source returns zeros (posterior/prior means).
class NoiseSource {
public:
    NoiseSource() = default;
    explicit NoiseSource(std::uint64_t seed) : random_(true), rng_(seed) {}

    bool deterministic() const { return !random_; }

    template <class T>
    std::vector<T> draw(std::size_t count) {
        std::vector<T> out(count, T(0));
        if (random_)
            for (auto& v : out) v = static_cast<T>(normal_(rng_));
        return out;
    }

private:
    bool random_ = false;
    std::mt19937_64 rng_;
    std::normal_distribution<double> normal_;
};

enum class ParamRole { encoder, decoder };

template <class T>
struct Parameter {
    std::string name;
    ParamRole role;
    ag::Var<T> var;
};

template <class T>
class HierarchicalVae {
public:
    using Var = ag::Var<T>;

    struct GroupTerms {
        Var z;
        Var mu;
        Var sigma;
        Var delta_mu;     // undefined in generation passes
        Var delta_sigma;  // undefined in generation passes
    };

    struct Pass {
        std::vector<GroupTerms> groups;
        Var state;  // top-down state after the last group
    };

    HierarchicalVae(ArchConfig arch, std::uint64_t seed);
    HierarchicalVae(const HierarchicalVae&) = delete;
    HierarchicalVae& operator=(const HierarchicalVae&) = delete;
    HierarchicalVae(HierarchicalVae&&) = default;
    HierarchicalVae& operator=(HierarchicalVae&&) = default;

    const ArchConfig& arch() const { return arch_; }
    std::vector<Parameter<T>>& parameters() { return params_; }
    const std::vector<Parameter<T>>& parameters() const { return params_; }
    std::size_t parameter_count() const;

    // Flat copies of every parameter tensor, in declaration order.
    std::vector<std::vector<T>> snapshot() const;
    void restore(const std::vector<std::vector<T>>& values);

    // ---- graph-level API (used by training and gradient checks) ----

    // x: [B, in_channels, N, N]. Returns the encoder feature feeding each group.
    std::vector<Var> bottom_up(const Var& x) const;
    // Posterior pass; group g sees only features[g] and samples of groups < g.
    Pass infer(const std::vector<Var>& group_features, NoiseSource& noise) const;
    Pass generate(int batch, NoiseSource& noise) const;
    // Top-down pass with the given samples (no distributions computed).
    Pass replay(const std::vector<Var>& samples) const;
    Var reconstruct(const Pass& pass) const;
    Var kl(const Pass& pass) const;

    // ---- tensor-level API; tensors are [B, N, N, C] row-major ----

    LatentState<T> encode(std::span<const T> x, int batch, NoiseSource& noise) const;
    LatentState<T> sample_prior(int batch, NoiseSource& noise) const;
    std::vector<T> decode(const LatentState<T>& z) const;

    // Layout conversion between [B, N, N, C] and [B, C, N, N].
    static std::vector<T> to_nchw(std::span<const T> nhwc, int batch, int n, int channels);
    static std::vector<T> to_nhwc(std::span<const T> nchw, int batch, int n, int channels);

private:
    struct Conv {
        Var weight;
        Var bias;
        int stride = 1;
        int pad = 1;
    };
    struct Cell {
        Var gamma;
        Var beta;
        Var dw_weight;
        Var dw_bias;
        Conv pointwise;
    };
    struct GroupHeads {
        Conv posterior;  // concat(state, feature) -> [delta_mu | log delta_sigma]
        Conv prior;      // state -> [mu | log sigma]; unused for the top group
        Conv merge;      // z -> state channels
    };

    Conv make_conv(const std::string& name, ParamRole role, int in, int out, int k, int stride, double gain);
    Cell make_cell(const std::string& name, ParamRole role, int channels);
    Var apply(const Conv& conv, const Var& x) const;
    Var apply(const Cell& cell, const Var& x) const;
    Var apply_cells(const std::vector<Cell>& cells, Var x) const;
    Var up(int to_level, const Var& x) const;
    Var initial_state(int batch) const;
    Var sample(const Var& mean, const Var& stddev, NoiseSource& noise) const;
    void check_input(const Var& x) const;

    ArchConfig arch_;
    std::mt19937_64 init_rng_;
    std::vector<Parameter<T>> params_;

    // encoder
    Conv stem_;
    std::vector<std::vector<Cell>> enc_cells_;  // per level
    std::vector<Conv> down_;                    // level l -> l + 1
    // decoder
    Var top_state_;                             // [1, C_top, side, side]
    std::vector<GroupHeads> heads_;
    std::vector<std::vector<Cell>> group_cells_;  // applied before group g (g >= 1) and after the last
    std::vector<Conv> up_;                      // indexed by target level: up_[l] maps l+1 -> l
    std::vector<std::vector<Cell>> up_cells_;   // cells after arriving at level l
    Conv output_;
};

}  // namespace tsad
