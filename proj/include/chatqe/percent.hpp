// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

namespace chatqe {

/// 100 * num / den rounded half-up to two decimals, computed in integer
/// arithmetic so table values such as 73.30 come out exact. Returns 0 when
/// den is 0.
double percent(long long num, long long den);

/// Hundredths of a percent, i.e. percent(num, den) * 100 as an integer.
long long percent_hundredths(long long num, long long den);

/// "73.30" style rendering of a hundredths value.
std::string format_hundredths(long long hundredths);
std::string format_percent(long long num, long long den);

}  // namespace chatqe
