#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "halo/error.hpp"

namespace halo {

/// Either a fraction of the population or an exact item count.
class SampleSpec {
 public:
  static SampleSpec fraction(double p) {
    if (!(p > 0.0 && p <= 1.0)) throw Error(Errc::Validation, "sample fraction must be in (0, 1]");
    return SampleSpec(p, 0);
  }
  static SampleSpec count(std::size_t n) {
    if (n == 0) throw Error(Errc::Validation, "sample count must be positive");
    return SampleSpec(0.0, n);
  }

  bool is_fraction() const noexcept { return count_ == 0; }
  double fraction_value() const noexcept { return fraction_; }
  std::size_t count_value() const noexcept { return count_; }

  /// Number of items to draw from a population of `population` items.
  std::size_t target(std::size_t population) const {
    if (!is_fraction()) {
      if (count_ > population) {
        throw Error(Errc::Validation, "sample count " + std::to_string(count_) + " exceeds population " +
                                          std::to_string(population));
      }
      return count_;
    }
    auto t = static_cast<std::size_t>(std::floor(fraction_ * static_cast<double>(population) + 0.5));
    return std::clamp<std::size_t>(t, 1, population);
  }

 private:
  SampleSpec(double p, std::size_t n) : fraction_(p), count_(n) {}
  double fraction_;
  std::size_t count_;
};

/// Splits `total` across groups proportionally to `sizes` using the largest
/// remainder method: floors first, then one extra unit to the groups with the
/// largest fractional parts (earlier groups win ties).
inline std::vector<std::size_t> largest_remainder(const std::vector<std::size_t>& sizes, std::size_t total) {
  const auto population = std::accumulate(sizes.begin(), sizes.end(), std::uint64_t{0});
  if (population == 0) throw Error(Errc::Validation, "cannot allocate over an empty population");
  if (total > population) throw Error(Errc::Validation, "allocation exceeds population");
  std::vector<std::size_t> alloc(sizes.size());
  std::vector<std::uint64_t> remainder(sizes.size());
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    const std::uint64_t scaled = static_cast<std::uint64_t>(total) * sizes[i];
    alloc[i] = static_cast<std::size_t>(scaled / population);
    remainder[i] = scaled % population;
    assigned += alloc[i];
  }
  std::vector<std::size_t> order(sizes.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return remainder[a] > remainder[b]; });
  for (std::size_t k = 0; assigned < total; ++k, ++assigned) ++alloc[order[k]];
  return alloc;
}

/// Proportional stratified sample without replacement. Strata are processed in
/// key order with one generator seeded by `seed`; the result keeps input order.
template <class Item, class StratumOf>
std::vector<Item> stratified_sample(std::span<const Item> items, const SampleSpec& spec, std::uint64_t seed,
                                    StratumOf&& stratum_of) {
  if (items.empty()) throw Error(Errc::Validation, "cannot sample from an empty item list");
  std::map<std::string, std::vector<std::size_t>> strata;
  for (std::size_t i = 0; i < items.size(); ++i) strata[std::invoke(stratum_of, items[i])].push_back(i);

  std::vector<std::size_t> sizes;
  for (const auto& [key, members] : strata) sizes.push_back(members.size());
  const auto alloc = largest_remainder(sizes, spec.target(items.size()));

  std::mt19937_64 rng(seed);
  std::vector<std::size_t> chosen;
  std::size_t s = 0;
  for (const auto& [key, members] : strata) {
    std::sample(members.begin(), members.end(), std::back_inserter(chosen), alloc[s++], rng);
  }
  std::sort(chosen.begin(), chosen.end());
  std::vector<Item> out;
  out.reserve(chosen.size());
  for (auto i : chosen) out.push_back(items[i]);
  return out;
}

}  // namespace halo
