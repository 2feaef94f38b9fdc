// Real-valued multiple-access channel: Rayleigh draws, absorption, reception.
#pragma once

#include <string>

#include <Eigen/Dense>

#include "aircomp/errors.hpp"
#include "aircomp/random.hpp"
#include "aircomp/signal_model.hpp"

namespace aircomp {

/// Per-sensor channel coefficients and average power limits.
struct ChannelRealization {
    Eigen::VectorXd h;  ///< Real channel coefficients, finite.
    Eigen::VectorXd P;  ///< Power limits, strictly positive.
};

/// Channel-absorbed transmit-scaling vector: entry k carries h_k times the raw gain.
struct EffectiveScaling {
    Eigen::VectorXd b;
};

/// Draw K independent Rayleigh magnitudes with E[h_k^2] = 1 (all strictly positive).
inline Eigen::VectorXd sample_rayleigh(Eigen::Index K, RngStream& rng) {
    if (K < 1) {
        throw ValidityError("sample_rayleigh: K must be >= 1");
    }
    Eigen::VectorXd h(K);
    for (Eigen::Index k = 0; k < K; ++k) h(k) = rng.rayleigh();
    return h;
}

/// y = b^T x + z with z ~ N(0, sigma_z^2); sigma_z is the noise standard deviation.
inline double receive(const EffectiveScaling& b, const SignalState& x, double sigma_z,
                      RngStream& rng) {
    if (b.b.size() != x.x.size()) {
        throw DimensionError("receive: scaling has " + std::to_string(b.b.size()) +
                             " entries but state has " + std::to_string(x.x.size()));
    }
    if (!(sigma_z >= 0.0)) {
        throw ValidityError("receive: sigma_z must be >= 0");
    }
    return b.b.dot(x.x) + sigma_z * rng.normal();
}

/// Fold the channel into the raw scaling: b_k = h_k * b_raw_k.
inline EffectiveScaling absorb_channel(const Eigen::VectorXd& h,
                                       const Eigen::VectorXd& b_raw) {
    if (h.size() != b_raw.size()) {
        throw DimensionError("absorb_channel: h and b_raw must have equal length");
    }
    return EffectiveScaling{h.cwiseProduct(b_raw)};
}

} // namespace aircomp
