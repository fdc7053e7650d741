#include "conqur/rng.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace conqur {

double Rng::normal() noexcept {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t stream_key(std::uint64_t master, std::string_view label, std::uint64_t index) {
    std::string text(label);
    text += ':';
    text += std::to_string(index);
    Rng mix(master ^ fnv1a64(text));
    return mix();
}

Rng split_stream(std::uint64_t master, std::string_view label, std::uint64_t index) {
    return Rng(stream_key(master, label, index));
}

}  // namespace conqur
