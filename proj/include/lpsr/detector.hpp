#pragma once

#include <span>
#include <stdexcept>

namespace lpsr {

struct GateConfig {
    double tau_phi = 0.6;  // cosine threshold, in (0, 1)
    double tau_h = 2.5;    // entropy threshold (nats); 0 disables the entropy gate
};

// Per-step detection record.
struct GateDecision {
    int step = 0;
    double cos = 0.0;
    double entropy = 0.0;
    bool authenticated = false;
};

/// Dual gate: a directional reversal is authenticated iff the cosine drops
/// strictly below -tau_phi AND the entropy rises strictly above tau_h.
/// Values exactly on either threshold do not fire.
inline GateDecision authenticate(double cos, double entropy, const GateConfig& cfg,
                                 int step = 0) {
    if (!(cfg.tau_phi > 0.0 && cfg.tau_phi < 1.0))
        throw std::invalid_argument("GateConfig: tau_phi must be in (0, 1)");
    if (cfg.tau_h < 0.0)
        throw std::invalid_argument("GateConfig: tau_h must be >= 0");
    GateDecision d;
    d.step = step;
    d.cos = cos;
    d.entropy = entropy;
    d.authenticated = (cos < -cfg.tau_phi) && (entropy > cfg.tau_h);
    return d;
}

/// Minimum consecutive-step cosine over a trace. The most negative value is
/// the strongest reversal signal; callers use it (negated) as a score for
/// ranking traces by how error-like they look.
inline double detection_score(std::span<const double> cosines) {
    if (cosines.empty()) throw std::domain_error("detection_score: empty trace");
    double m = cosines[0];
    for (double c : cosines)
        if (c < m) m = c;
    return m;
}

}  // namespace lpsr
