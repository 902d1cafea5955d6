#pragma once

#include "tsad/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace tsad {

struct AdamaxOptions {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Adamax (infinity-norm Adam):
//   m <- b1 m + (1 - b1) g
//   u <- max(b2 u, |g|)
//   p <- p - lr / (1 - b1^t) * m / (u + eps)
template <class T>
class Adamax {
public:
    Adamax(std::vector<ag::Var<T>> params, AdamaxOptions options)
        : params_(std::move(params)), options_(options) {
        for (const auto& p : params_) {
            m_.emplace_back(p.value().size(), 0.0);
            u_.emplace_back(p.value().size(), 0.0);
        }
    }

    void step() {
        ++t_;
        const double correction = options_.lr / (1.0 - std::pow(options_.beta1, static_cast<double>(t_)));
        for (std::size_t k = 0; k < params_.size(); ++k) {
            auto& value = params_[k].mutable_value();
            const auto grad = params_[k].grad();
            auto& m = m_[k];
            auto& u = u_[k];
            for (std::size_t i = 0; i < value.size(); ++i) {
                const double g = grad[i];
                m[i] = options_.beta1 * m[i] + (1.0 - options_.beta1) * g;
                u[i] = std::max(options_.beta2 * u[i], std::abs(g));
                value[i] = static_cast<T>(value[i] - correction * m[i] / (u[i] + options_.eps));
            }
        }
    }

    long steps() const { return t_; }
    const AdamaxOptions& options() const { return options_; }

private:
    std::vector<ag::Var<T>> params_;
    AdamaxOptions options_;
    std::vector<std::vector<double>> m_;
    std::vector<std::vector<double>> u_;
    long t_ = 0;
};

}  // namespace tsad
