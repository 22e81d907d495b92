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

#ifndef SEETHROUGH_TIME_HPP_
#define SEETHROUGH_TIME_HPP_

#include <chrono>
#include <cmath>
#include <cstdint>

namespace seethrough {

// Session time and durations. Absolute times are offsets from the session
// epoch, so both share one representation.
using Micros = std::chrono::microseconds;

using namespace std::chrono_literals;

inline Micros micros_from_ms(double ms) {
    return Micros{static_cast<Micros::rep>(std::llround(ms * 1000.0))};
}

constexpr std::int64_t floor_div(std::int64_t a, std::int64_t b) noexcept {
    std::int64_t q = a / b;
    if ((a % b != 0) && ((a < 0) != (b < 0))) {
        --q;
    }
    return q;
}

}  // namespace seethrough

#endif  // SEETHROUGH_TIME_HPP_
