#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace grainforge {

enum class errc {
  invalid_argument,
  degenerate_sample,
  domain_mismatch,
  loop_through_defect,
  invalid_test_function,
  geometry,
  theta_degenerate,
  alpha_too_large,
  tiling_incompatible,
  precondition,
  no_clean_section,
  budget,
  resolution,
  extension_impossible,
  solver,
  optimizer_fault,
  not_a_micro_rotation,
  spacing,
  io,
};

class error : public std::runtime_error {
public:
  error(errc code, const std::string& what) : std::runtime_error(what), code_(code) {}
  errc code() const { return code_; }

  // Exit-code bucket for the CLI: configuration/usage problems vs numerical failures.
  bool is_usage() const {
    switch (code_) {
      case errc::invalid_argument:
      case errc::precondition:
      case errc::theta_degenerate:
      case errc::alpha_too_large:
      case errc::resolution:
      case errc::spacing:
      case errc::io:
        return true;
      default:
        return false;
    }
  }

private:
  errc code_;
};

[[noreturn]] inline void fail(errc code, const std::string& what) { throw error(code, what); }

// Deterministic pairwise-tree summation; used for all quadrature reductions.
double pairwise_sum(std::span<const double> v);

// Small deterministic RNG (splitmix64 core). Identical streams across platforms.
class rng {
public:
  explicit rng(std::uint64_t seed) : state_(seed) {}
  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }
  // Uniform in [0,1): 53 mantissa bits, bit-reproducible.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }
  double uniform(double a, double b) { return a + (b - a) * uniform(); }
  int uniform_int(int lo, int hi) {  // inclusive bounds
    return lo + static_cast<int>(next_u64() % static_cast<std::uint64_t>(hi - lo + 1));
  }

private:
  std::uint64_t state_;
};

inline constexpr const char* kFormatVersion = "grainforge-1";

}  // namespace grainforge
