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

#ifndef SEETHROUGH_SYNC_SCHEDULER_HPP_
#define SEETHROUGH_SYNC_SCHEDULER_HPP_

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "seethrough/error.hpp"
#include "seethrough/intervals.hpp"
#include "seethrough/time.hpp"

namespace seethrough {

// Display-off / camera-on timing for a transparent panel with a camera
// mounted behind it. Each frame the panel blanks for the capture window and
// the camera may only expose while it is blank.
//
// The schedule is periodic in both directions: frame k starts at
// epoch + k * period for every integer k.
struct FrameSchedule {
    Micros period{16667};
    Micros capture_offset{0};
    Micros capture_duration{6000};
    Micros epoch{0};

    bool valid() const noexcept {
        return period > Micros::zero() && capture_offset >= Micros::zero() &&
               capture_duration >= Micros::zero() && capture_offset + capture_duration <= period;
    }

    bool operator==(const FrameSchedule&) const = default;
};

inline void validate(const FrameSchedule& s) {
    if (s.period <= Micros::zero()) {
        throw Error(Errc::InvalidRate, "frame period must be positive");
    }
    if (s.capture_offset < Micros::zero() || s.capture_duration < Micros::zero()) {
        throw Error(Errc::InvalidWindow, "capture offset and duration must be non-negative");
    }
    if (s.capture_offset + s.capture_duration > s.period) {
        throw Error(Errc::WindowOverflow,
                    "capture window [" + std::to_string(s.capture_offset.count()) + ", " +
                        std::to_string((s.capture_offset + s.capture_duration).count()) +
                        ") exceeds period " + std::to_string(s.period.count()));
    }
}

/// Builds a schedule from frame rate and millisecond window parameters.
/// The period is rounded to the nearest microsecond (60 fps -> 16667 us).
inline FrameSchedule build_schedule(double fps, double capture_ms, double offset_ms = 0.0,
                                    Micros epoch = Micros::zero()) {
    if (!(fps > 0.0) || !std::isfinite(fps)) {
        throw Error(Errc::InvalidRate, "fps must be a positive finite number");
    }
    if (!(capture_ms >= 0.0) || !(offset_ms >= 0.0) || !std::isfinite(capture_ms) ||
        !std::isfinite(offset_ms)) {
        throw Error(Errc::InvalidWindow, "capture and offset must be non-negative");
    }
    FrameSchedule s;
    s.period = Micros{static_cast<Micros::rep>(std::llround(1e6 / fps))};
    s.capture_duration = micros_from_ms(capture_ms);
    s.capture_offset = micros_from_ms(offset_ms);
    s.epoch = epoch;
    validate(s);
    return s;
}

/// Microseconds per frame during which the panel shows content.
constexpr Micros display_on_time(const FrameSchedule& s) noexcept {
    return s.period - s.capture_duration;
}

inline double display_duty(const FrameSchedule& s) noexcept {
    return static_cast<double>(display_on_time(s).count()) / static_cast<double>(s.period.count());
}

inline double capture_rate_hz(const FrameSchedule& s) noexcept {
    return s.capture_duration > Micros::zero() ? 1e6 / static_cast<double>(s.period.count()) : 0.0;
}

using TimeWindow = Interval;

/// Unclipped capture window of frame k.
constexpr TimeWindow capture_window(const FrameSchedule& s, std::int64_t frame) noexcept {
    const Micros start = s.epoch + s.period * frame + s.capture_offset;
    return {start, start + s.capture_duration};
}

/// Index of the frame whose period contains t.
constexpr std::int64_t frame_index(const FrameSchedule& s, Micros t) noexcept {
    return floor_div((t - s.epoch).count(), s.period.count());
}

/// Capture windows intersecting [from, to), clipped to that range, in order.
inline std::vector<TimeWindow> capture_windows(const FrameSchedule& s, Micros from, Micros to) {
    std::vector<TimeWindow> out;
    if (to <= from || s.capture_duration <= Micros::zero()) {
        return out;
    }
    // First frame whose window ends after `from`.
    std::int64_t k =
        floor_div((from - s.epoch - s.capture_offset - s.capture_duration).count(), s.period.count()) + 1;
    for (;; ++k) {
        const TimeWindow w = capture_window(s, k);
        if (w.start >= to) {
            break;
        }
        const TimeWindow clipped{std::max(w.start, from), std::min(w.end, to)};
        if (clipped.start < clipped.end) {
            out.push_back(clipped);
        }
    }
    return out;
}

struct CaptureDecision {
    enum class Kind { Admit, DeferUntil, TooLong };

    Kind kind;
    Micros next_start{0};  // meaningful for DeferUntil only

    static CaptureDecision admit() { return {Kind::Admit, Micros::zero()}; }
    static CaptureDecision defer_until(Micros t) { return {Kind::DeferUntil, t}; }
    static CaptureDecision too_long() { return {Kind::TooLong, Micros::zero()}; }

    bool operator==(const CaptureDecision&) const = default;
};

/// Decides whether a camera exposure of `exposure` starting at `start` can run
/// entirely inside one blanking window. A zero-length exposure is admitted
/// when `start` itself falls inside a window. A schedule without a capture
/// window never admits anything.
inline CaptureDecision gate_capture(const FrameSchedule& s, Micros start, Micros exposure) {
    if (exposure < Micros::zero()) {
        throw Error(Errc::InvalidWindow, "exposure must be non-negative");
    }
    if (s.capture_duration == Micros::zero() || exposure > s.capture_duration) {
        return CaptureDecision::too_long();
    }
    const TimeWindow w = capture_window(s, floor_div((start - s.epoch - s.capture_offset).count(), s.period.count()));
    if (w.contains(start) && start + exposure <= w.end) {
        return CaptureDecision::admit();
    }
    // w.start <= start always holds here, and w.start == start would have
    // been admitted, so the next window is the earliest one that fits.
    return CaptureDecision::defer_until(w.start + s.period);
}

struct OpticalGeometry {
    double viewing_distance_mm = 500.0;
    double camera_lateral_offset_mm = 0.0;
    // How far the camera axis may sit off the on-screen eyes and still read
    // as eye contact. Assumed, not measured.
    double contact_threshold_deg = 5.0;
};

inline void validate(const OpticalGeometry& g) {
    if (!(g.viewing_distance_mm > 0.0) || !(g.contact_threshold_deg > 0.0) ||
        !(g.camera_lateral_offset_mm >= 0.0)) {
        throw Error(Errc::InvalidGeometry,
                    "distance and threshold must be positive, camera offset non-negative");
    }
}

/// Angle in degrees between the viewer's line of sight to the displayed eyes
/// and the camera axis.
inline double parallax_angle(const OpticalGeometry& g) {
    validate(g);
    return std::atan(g.camera_lateral_offset_mm / g.viewing_distance_mm) * 180.0 / std::numbers::pi;
}

inline bool eye_contact_perceived(const OpticalGeometry& g) {
    return parallax_angle(g) < g.contact_threshold_deg;
}

}  // namespace seethrough

#endif  // SEETHROUGH_SYNC_SCHEDULER_HPP_
