// SPDX-License-Identifier: Apache-2.0
#include "chatqe/percent.hpp"

#include <cstdio>
#include <cstdlib>

namespace chatqe {

long long percent_hundredths(long long num, long long den) {
  if (den == 0) return 0;
  // round(10000 * num / den) with ties away from zero, for num, den >= 0.
  __int128 n = static_cast<__int128>(num) * 20000 + den;
  __int128 d = static_cast<__int128>(den) * 2;
  return static_cast<long long>(n / d);
}

double percent(long long num, long long den) {
  return static_cast<double>(percent_hundredths(num, den)) / 100.0;
}

std::string format_hundredths(long long h) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s%lld.%02lld", h < 0 ? "-" : "", std::llabs(h) / 100, std::llabs(h) % 100);
  return buf;
}

std::string format_percent(long long num, long long den) { return format_hundredths(percent_hundredths(num, den)); }

}  // namespace chatqe
