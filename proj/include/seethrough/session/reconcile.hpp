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

#ifndef SEETHROUGH_SESSION_RECONCILE_HPP_
#define SEETHROUGH_SESSION_RECONCILE_HPP_

#include <algorithm>
#include <cstdlib>
#include <optional>
#include <vector>

#include "seethrough/gaze_engine.hpp"
#include "seethrough/intervals.hpp"
#include "seethrough/session/site.hpp"

namespace seethrough::session {

// An episode of at least twice the latency bound seen at `seen_at` with no
// overlapping episode of the same pair at `missing_at`.
struct EpisodeMismatch {
    ParticipantId seen_at;
    ParticipantId missing_at;
    ParticipantPair pair;
    Interval episode;

    bool operator==(const EpisodeMismatch&) const = default;
};

struct SitePairSkew {
    ParticipantId a;
    ParticipantId b;
    Micros max_skew{0};
    std::size_t matched = 0;
};

struct AgreementReport {
    Micros latency_bound{0};
    Micros jitter{0};
    std::vector<EpisodeMismatch> mismatches;
    std::vector<SitePairSkew> skews;
    Micros max_skew{0};
    bool agrees = true;
};

namespace detail {

inline std::vector<std::pair<ParticipantPair, Interval>> clip_to(const std::vector<MutualGazeEpisode>& episodes,
                                                                 const Interval& window) {
    std::vector<std::pair<ParticipantPair, Interval>> out;
    for (const auto& e : episodes) {
        Interval iv = e.clipped(window.end);
        iv.start = std::max(iv.start, window.start);
        if (!iv.empty()) {
            out.emplace_back(e.pair, iv);
        }
    }
    return out;
}

}  // namespace detail

/// Compares what every pair of sites concluded about mutual gaze over the
/// time both were members. Episodes are matched by pair and overlap; short
/// episodes (under 2 * latency_bound) need not be matched, since a glance
/// that brief can legitimately vanish at a site that sees one side late.
inline AgreementReport reconcile_views(const std::vector<SessionView>& views, Micros latency_bound,
                                       Micros jitter = Micros::zero()) {
    AgreementReport report;
    report.latency_bound = latency_bound;
    report.jitter = jitter;
    for (std::size_t i = 0; i < views.size(); ++i) {
        for (std::size_t j = i + 1; j < views.size(); ++j) {
            const auto& x = views[i];
            const auto& y = views[j];
            const Interval common{std::max(x.membership.start, y.membership.start),
                                  std::min(x.membership.end, y.membership.end)};
            SitePairSkew skew{x.site, y.site, Micros::zero(), 0};
            if (!common.empty()) {
                const auto ex = detail::clip_to(x.episode_log, common);
                const auto ey = detail::clip_to(y.episode_log, common);
                auto check = [&](const auto& from, const auto& against, const ParticipantId& seen,
                                 const ParticipantId& missing) {
                    for (const auto& [pair, iv] : from) {
                        if (iv.length() < 2 * latency_bound) {
                            continue;
                        }
                        std::optional<Interval> best;
                        for (const auto& [other_pair, other] : against) {
                            if (other_pair != pair || other.end <= iv.start || iv.end <= other.start) {
                                continue;
                            }
                            if (!best || std::abs((other.start - iv.start).count()) <
                                             std::abs((best->start - iv.start).count())) {
                                best = other;
                            }
                        }
                        if (!best) {
                            report.mismatches.push_back({seen, missing, pair, iv});
                            continue;
                        }
                        const Micros s{std::max(std::abs((best->start - iv.start).count()),
                                                std::abs((best->end - iv.end).count()))};
                        skew.max_skew = std::max(skew.max_skew, s);
                        ++skew.matched;
                    }
                };
                check(ex, ey, x.site, y.site);
                check(ey, ex, y.site, x.site);
            }
            report.max_skew = std::max(report.max_skew, skew.max_skew);
            report.skews.push_back(std::move(skew));
        }
    }
    report.agrees = report.mismatches.empty() && report.max_skew <= latency_bound + jitter;
    return report;
}

}  // namespace seethrough::session

#endif  // SEETHROUGH_SESSION_RECONCILE_HPP_
