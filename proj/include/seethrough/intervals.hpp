/*
    Licensed under the Apache License, Version 2.0 (the "License");
    you may not use this file except in compliance with the License.
    You may obtain a copy of the License at

        https://www.apache.org/licenses/LICENSE-2.0

    Unless required by applicable law or agreed to in writing, software
    distributed under the License is distributed on an "AS IS" BASIS,
    WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
    See the License for the specific language governing permissions and
    limitations under the License.
*/

#ifndef SEETHROUGH_INTERVALS_HPP_
#define SEETHROUGH_INTERVALS_HPP_

#include <algorithm>
#include <vector>

#include "seethrough/time.hpp"

namespace seethrough {

// Half-open time interval [start, end).
struct Interval {
    Micros start{0};
    Micros end{0};

    Micros length() const noexcept { return end - start; }
    bool empty() const noexcept { return end <= start; }
    bool contains(Micros t) const noexcept { return start <= t && t < end; }
    bool contains(const Interval& other) const noexcept {
        return start <= other.start && other.end <= end;
    }

    bool operator==(const Interval&) const = default;
};

/// Sorts and coalesces overlapping or touching intervals; drops empty ones.
inline std::vector<Interval> merge_intervals(std::vector<Interval> in) {
    std::erase_if(in, [](const Interval& i) { return i.empty(); });
    std::sort(in.begin(), in.end(), [](const Interval& a, const Interval& b) {
        return a.start < b.start || (a.start == b.start && a.end < b.end);
    });
    std::vector<Interval> out;
    for (const auto& i : in) {
        if (!out.empty() && i.start <= out.back().end) {
            out.back().end = std::max(out.back().end, i.end);
        } else {
            out.push_back(i);
        }
    }
    return out;
}

/// a \ b for sorted, disjoint inputs.
inline std::vector<Interval> subtract_intervals(const std::vector<Interval>& a,
                                                const std::vector<Interval>& b) {
    std::vector<Interval> out;
    std::size_t j = 0;
    for (const auto& iv : a) {
        Micros cursor = iv.start;
        while (j < b.size() && b[j].end <= cursor) {
            ++j;
        }
        for (std::size_t k = j; k < b.size() && b[k].start < iv.end; ++k) {
            if (b[k].start > cursor) {
                out.push_back({cursor, b[k].start});
            }
            cursor = std::max(cursor, b[k].end);
        }
        if (cursor < iv.end) {
            out.push_back({cursor, iv.end});
        }
    }
    return out;
}

inline Micros total_length(const std::vector<Interval>& in) {
    Micros sum{0};
    for (const auto& i : in) {
        sum += i.length();
    }
    return sum;
}

}  // namespace seethrough

#endif  // SEETHROUGH_INTERVALS_HPP_
