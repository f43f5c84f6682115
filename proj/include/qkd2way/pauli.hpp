// Copyright 2026 The qkd2way Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <array>
#include <initializer_list>
#include <cmath>
#include <cstdint>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "qkd2way/rng.hpp"

namespace qkd2way {

inline constexpr double kNormalizationTolerance = 1e-12;

/// Error probabilities of an i.i.d. single-qubit Pauli channel.
struct PauliRates {
    double p_i = 1.0;
    double p_x = 0.0;
    double p_y = 0.0;
    double p_z = 0.0;

    /// Spin-flip error: flips the key bit.
    double bit_error() const { return p_x + p_y; }
    /// Phase error: what privacy amplification has to remove.
    double phase_error() const { return p_y + p_z; }
    double channel_error() const { return p_x + p_y + p_z; }

    std::array<double, 4> as_array() const { return {p_i, p_x, p_y, p_z}; }

    bool is_normalized(double tol = kNormalizationTolerance) const {
        return p_i >= 0 && p_x >= 0 && p_y >= 0 && p_z >= 0 && std::abs(p_i + p_x + p_y + p_z - 1.0) <= tol;
    }

    /// Validating constructor; throws std::domain_error on a non-distribution.
    static PauliRates checked(double p_i, double p_x, double p_y, double p_z) {
        PauliRates r{p_i, p_x, p_y, p_z};
        if (!r.is_normalized()) {
            throw std::domain_error("PauliRates: components must be non-negative and sum to 1");
        }
        return r;
    }

    bool operator==(const PauliRates&) const = default;
};

inline void require_normalized(const PauliRates& r) {
    if (!r.is_normalized()) {
        throw std::domain_error("PauliRates: components must be non-negative and sum to 1");
    }
}

inline std::ostream& operator<<(std::ostream& out, const PauliRates& r) {
    return out << "(" << r.p_i << ", " << r.p_x << ", " << r.p_y << ", " << r.p_z << ")";
}

/// Depolarizing channel with the given bit error p_x + p_y; p_x = p_y = p_z.
inline PauliRates depolarizing(double bit_error) {
    if (!(bit_error >= 0.0 && bit_error <= 2.0 / 3.0)) {
        throw std::domain_error("depolarizing: bit error must lie in [0, 2/3]");
    }
    const double p = bit_error / 2.0;
    return PauliRates{1.0 - 1.5 * bit_error, p, p, p};
}

/// Symplectic Pauli label: bit 0 is the x part, bit 1 the z part.
struct PauliLabel {
    std::uint8_t bits = 0;

    constexpr PauliLabel() = default;
    constexpr PauliLabel(bool x, bool z) : bits(static_cast<std::uint8_t>((x ? 1 : 0) | (z ? 2 : 0))) {}

    static constexpr PauliLabel from_bits(std::uint8_t b) {
        PauliLabel p;
        p.bits = static_cast<std::uint8_t>(b & 3);
        return p;
    }

    constexpr bool x() const { return (bits & 1) != 0; }
    constexpr bool z() const { return (bits & 2) != 0; }

    constexpr PauliLabel operator*(PauliLabel other) const { return from_bits(bits ^ other.bits); }
    constexpr bool operator==(const PauliLabel&) const = default;

    char name() const { return "IXZY"[bits]; }
};

namespace pauli {
inline constexpr PauliLabel I{false, false};
inline constexpr PauliLabel X{true, false};
inline constexpr PauliLabel Y{true, true};
inline constexpr PauliLabel Z{false, true};
}  // namespace pauli

inline std::ostream& operator<<(std::ostream& out, PauliLabel p) { return out << p.name(); }

/// Joint Alice-Bob error record for a string of positions, packed 32 labels per word.
class ErrorFrame {
  public:
    std::uint64_t origin_seed = 0;
    std::uint32_t generation = 0;

    ErrorFrame() = default;
    explicit ErrorFrame(std::size_t n) : words_((n + kPerWord - 1) / kPerWord, 0), size_(n) {}
    ErrorFrame(std::initializer_list<PauliLabel> labels) {
        reserve(labels.size());
        for (auto p : labels) {
            push_back(p);
        }
    }

    std::size_t size() const { return size_; }
    bool empty() const { return size_ == 0; }

    PauliLabel operator[](std::size_t i) const {
        return PauliLabel::from_bits(static_cast<std::uint8_t>(words_[i / kPerWord] >> (2 * (i % kPerWord))));
    }

    void set(std::size_t i, PauliLabel p) {
        auto& w = words_[i / kPerWord];
        const unsigned shift = 2 * (i % kPerWord);
        w = (w & ~(std::uint64_t{3} << shift)) | (std::uint64_t{p.bits} << shift);
    }

    void push_back(PauliLabel p) {
        if (size_ % kPerWord == 0) {
            words_.push_back(0);
        }
        words_.back() |= std::uint64_t{p.bits} << (2 * (size_ % kPerWord));
        ++size_;
    }

    void reserve(std::size_t n) { words_.reserve((n + kPerWord - 1) / kPerWord); }

    /// Label histogram indexed by PauliLabel::bits (I, X, Z, Y).
    std::array<std::size_t, 4> counts() const {
        std::array<std::size_t, 4> c{};
        for (std::size_t i = 0; i < size_; ++i) {
            ++c[(*this)[i].bits];
        }
        return c;
    }

    std::string to_string() const {
        std::string s;
        s.reserve(size_);
        for (std::size_t i = 0; i < size_; ++i) {
            s.push_back((*this)[i].name());
        }
        return s;
    }

    /// Labels are compared; origin_seed and generation are provenance only.
    bool operator==(const ErrorFrame& other) const { return size_ == other.size_ && words_ == other.words_; }

  private:
    static constexpr std::size_t kPerWord = 32;
    std::vector<std::uint64_t> words_;
    std::size_t size_ = 0;
};

/// Draws one label from the channel given a uniform variate in [0, 1).
inline PauliLabel sample_label(const PauliRates& rates, double u) {
    if (u < rates.p_i) {
        return pauli::I;
    }
    if (u < rates.p_i + rates.p_x) {
        return pauli::X;
    }
    if (u < rates.p_i + rates.p_x + rates.p_y) {
        return pauli::Y;
    }
    // Rounding slack in the cumulative sum falls through to Z only when p_z > 0.
    if (rates.p_z > 0.0) {
        return pauli::Z;
    }
    return rates.p_y > 0.0 ? pauli::Y : rates.p_x > 0.0 ? pauli::X : pauli::I;
}

/// n i.i.d. labels from `rates`; identical (rates, n, seed) give identical frames.
inline ErrorFrame sample_frame(const PauliRates& rates, std::size_t n, std::uint64_t seed) {
    require_normalized(rates);
    ErrorFrame frame;
    frame.reserve(n);
    frame.origin_seed = seed;
    Rng rng(seed);
    for (std::size_t i = 0; i < n; ++i) {
        frame.push_back(sample_label(rates, rng.uniform01()));
    }
    return frame;
}

}  // namespace qkd2way
