#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace evorec {

class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

class ParseError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class DataError : public Error {
 public:
  using Error::Error;
};

// Deterministic RNG wrapper. All draws go through fixed bit manipulations so
// results are identical across standard library implementations (the std
// distribution classes are not portable).
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  // splitmix64
  uint64_t next() {
    uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // uniform in [0, n), n > 0
  size_t index(size_t n) {
    // Lemire's multiply-shift, rejection-free variant is fine at our scales.
    return static_cast<size_t>((static_cast<unsigned __int128>(next()) * n) >> 64);
  }

  // uniform in [0, 1)
  double real01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * real01(); }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[index(i)]);
    }
  }

  // k distinct indices from [0, n), k <= n, in draw order
  std::vector<size_t> sample_without_replacement(size_t n, size_t k);

 private:
  uint64_t state_;
};

// Stateless mix of several seeds into one, for deriving per-entity streams.
uint64_t mix_seed(uint64_t a, uint64_t b);
uint64_t mix_seed(uint64_t a, const std::string& s);

// FNV-1a over bytes; used for content hashing of candidate files.
uint64_t fnv1a(const std::string& bytes, uint64_t h = 0xcbf29ce484222325ULL);
std::string hex64(uint64_t v);

std::string read_file(const std::filesystem::path& p);
void write_file(const std::filesystem::path& p, const std::string& content);

// Shortest round-trippable decimal form of a double.
std::string format_double(double v);

std::vector<std::string> split(const std::string& s, char sep);
std::string trim(const std::string& s);

}  // namespace evorec
