#pragma once

#include "dicl/forecaster.hpp"
#include "dicl/tokenizer.hpp"

#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace testing {

// Knows the true continuation of every series it may be asked about and puts
// all mass on the bin of the true next value. The series is identified by the
// fewest bin mismatches over its prefix.
class OracleBackend final : public dicl::forecast::ForecastBackend {
 public:
  explicit OracleBackend(std::vector<std::vector<double>> truths) : truths_(std::move(truths)) {}

  std::vector<std::vector<double>> next_bin_probs(const dicl::forecast::TokenizedSeries& s,
                                                  std::span<const std::size_t> positions) const override {
    std::size_t best = 0;
    std::size_t best_miss = std::numeric_limits<std::size_t>::max();
    for (std::size_t j = 0; j < truths_.size(); ++j) {
      const auto& t = truths_[j];
      std::size_t miss = 0;
      for (std::size_t i = 0; i < s.bins.size(); ++i)
        if (i >= t.size() || dicl::tokenizer::encode_value(t[i], s.rescale, s.enc) != s.bins[i]) ++miss;
      if (miss < best_miss) best_miss = miss, best = j;
    }
    const auto& t = truths_[best];
    std::vector<std::size_t> pos(positions.begin(), positions.end());
    if (pos.empty())
      for (std::size_t i = 0; i < s.bins.size(); ++i) pos.push_back(i);
    std::vector<std::vector<double>> out;
    for (auto i : pos) {
      std::vector<double> p(s.enc.bin_count(), 0.0);
      const int b = i + 1 < t.size() ? dicl::tokenizer::encode_value(t[i + 1], s.rescale, s.enc) : s.bins[i];
      p[static_cast<std::size_t>(b)] = 1.0;
      out.push_back(std::move(p));
    }
    return out;
  }
  std::string name() const override { return "oracle"; }

 private:
  std::vector<std::vector<double>> truths_;
};

inline std::filesystem::path temp_dir(const std::string& tag) {
  static std::mt19937_64 rng(std::random_device{}());
  auto p = std::filesystem::temp_directory_path() / ("dicl_" + tag + "_" + std::to_string(rng() % 1000000000));
  std::filesystem::create_directories(p);
  return p;
}

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

inline std::string read_text(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace testing
