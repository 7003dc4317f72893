#pragma once

// Exposure mappings: intervention-level treatments (or propensities) pushed
// through the interference map onto outcome units.

#include <string>

#include "bnip/netdata.hpp"

namespace bnip {

namespace detail {

inline void check_exposure_dims(const InterferenceMap& h, const Vector& v, const char* what) {
    if (v.size() != h.units()) {
        throw ValidationError(std::string(what) + " has length " + std::to_string(v.size()) +
                              " but the interference map has " + std::to_string(h.units()) +
                              " columns");
    }
}

}  // namespace detail

/// abar_i = (1/J) sum_j H_ij a_j for treatments a in [0,1]^J.
inline Vector exposure_map(const InterferenceMap& h, const Vector& a) {
    detail::check_exposure_dims(h, a, "treatment vector");
    for (Index j = 0; j < a.size(); ++j) {
        if (!(a(j) >= 0.0 && a(j) <= 1.0))
            throw ValidationError("treatment at index " + std::to_string(j) + " is outside [0,1]");
    }
    return h.h * a / static_cast<double>(h.units());
}

/// Expected exposure with propensities e in (0,1)^J in place of treatments.
inline Vector expected_exposure(const InterferenceMap& h, const Vector& e) {
    detail::check_exposure_dims(h, e, "propensity vector");
    for (Index j = 0; j < e.size(); ++j) {
        if (!(e(j) > 0.0 && e(j) < 1.0))
            throw ValidationError("propensity at index " + std::to_string(j) +
                                  " is outside (0,1)");
    }
    return h.h * e / static_cast<double>(h.units());
}

/// c_i = (1/J) sum_j H_ij; the per-row weight used by A-learning's lambda.
inline Vector exposure_row_mass(const InterferenceMap& h) {
    return h.h.rowwise().sum() / static_cast<double>(h.units());
}

}  // namespace bnip
