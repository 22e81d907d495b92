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

#include <random>

#include <gtest/gtest.h>

#include "seethrough/session/reconcile.hpp"
#include "seethrough/session/simulation.hpp"
#include "support/oracles.hpp"

using namespace seethrough;
using namespace seethrough::session;

namespace {

std::vector<ParticipantPlan> all_at_zero(std::size_t n) {
    std::vector<ParticipantPlan> out;
    for (const auto& p : oracle::people(n)) {
        out.push_back({p, Micros{0}, std::nullopt});
    }
    return out;
}

SimConfig config(Micros latency, Micros jitter, Micros horizon, std::uint64_t seed = 1) {
    SimConfig c;
    c.network.base_latency = latency;
    c.network.jitter = jitter;
    c.network.seed = seed;
    c.horizon = horizon;
    return c;
}

// Gaze script over participants that all join at 0; times start after the
// joins have settled.
std::vector<ScriptedGaze> random_script(std::mt19937_64& rng, std::size_t n, std::size_t updates) {
    const auto ids = oracle::people(n);
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    std::uniform_int_distribution<long> step(0, 400);
    std::vector<ScriptedGaze> out;
    long t = 500'000;
    for (std::size_t i = 0; i < updates; ++i) {
        t += step(rng) * 1000;
        const auto who = pick(rng);
        auto target = pick(rng);
        if (target == who || rng() % 5 == 0) {
            out.push_back({Micros{t}, ids[who], GazeChoice::averted()});
        } else {
            out.push_back({Micros{t}, ids[who], GazeChoice::target(ids[target])});
        }
    }
    return out;
}

std::vector<MutualGazeEpisode> sorted(std::vector<MutualGazeEpisode> eps) {
    sort_episodes(eps);
    return eps;
}

const SessionView& view_of(const SimResult& r, const ParticipantId& p) {
    for (const auto& v : r.views) {
        if (v.site == p) {
            return v;
        }
    }
    throw std::out_of_range(p.str());
}

}  // namespace

TEST(Simulation, ThreePartyZeroLatency) {
    std::vector<ScriptedGaze> script{
        {Micros{500'000}, "C"_pid, GazeChoice::slot(0)},
        {Micros{1'000'000}, "A"_pid, GazeChoice::slot(0)},
        {Micros{1'000'000}, "B"_pid, GazeChoice::slot(1)},
        {Micros{11'000'000}, "A"_pid, GazeChoice::averted()},
        {Micros{11'000'000}, "B"_pid, GazeChoice::averted()},
    };
    const auto r = Simulation(config(Micros{0}, Micros{0}, Micros{12'000'000}), all_at_zero(3), script).run();
    const std::vector<MutualGazeEpisode> want{{ParticipantPair("A"_pid, "B"_pid), Micros{1'000'000}, Micros{11'000'000}}};
    EXPECT_EQ(r.ground_truth, want);
    for (const auto& v : r.views) {
        EXPECT_EQ(v.episode_log, want) << v.site.str();
    }
    EXPECT_EQ(r.link_count, 3u);
    EXPECT_TRUE(r.rejected.empty());
    EXPECT_TRUE(reconcile_views(r.views, Micros{0}).agrees);
}

TEST(Simulation, EachSiteMatchesOracleOnWhatItObserved) {
    std::mt19937_64 rng(77);
    for (int round = 0; round < 40; ++round) {
        const std::size_t n = 2 + rng() % 5;
        const Micros latency{static_cast<long>(rng() % 60'000)};
        const Micros jitter{static_cast<long>(rng() % 10'000)};
        auto cfg = config(latency, jitter, Micros{30'000'000}, rng());
        cfg.debounce = Micros{std::array{0L, 50'000L, 100'000L, 250'000L}[rng() % 4]};
        const auto r = Simulation(cfg, all_at_zero(n), random_script(rng, n, 60)).run();
        ASSERT_EQ(r.views.size(), n);
        for (const auto& v : r.views) {
            EXPECT_EQ(sorted(v.episode_log), oracle::episodes(r.observed.at(v.site), cfg.debounce, cfg.horizon))
                << "round " << round << " site " << v.site.str();
        }
        EXPECT_EQ(r.ground_truth, oracle::episodes(r.ground_truth_trace, cfg.debounce, cfg.horizon));
        // A contact near the debounce threshold can clear it at one site and
        // not another, so only shorter episodes may go unmatched.
        const auto agreement = reconcile_views(r.views, latency, jitter);
        for (const auto& m : agreement.mismatches) {
            EXPECT_LT(m.episode.length(), cfg.debounce + 2 * (latency + jitter))
                << "round " << round << " seen at " << m.seen_at.str() << " missing at " << m.missing_at.str();
        }
        EXPECT_LE(agreement.max_skew, latency + jitter);
    }
}

TEST(Simulation, ZeroLatencySitesEqualGroundTruth) {
    std::mt19937_64 rng(5);
    for (int round = 0; round < 20; ++round) {
        const std::size_t n = 2 + rng() % 5;
        const auto r = Simulation(config(Micros{0}, Micros{0}, Micros{30'000'000}), all_at_zero(n),
                                  random_script(rng, n, 60))
                           .run();
        for (const auto& v : r.views) {
            EXPECT_EQ(sorted(v.episode_log), r.ground_truth);
        }
    }
}

TEST(Simulation, FrameStubsFitCaptureWindows) {
    auto cfg = config(Micros{20'000}, Micros{0}, Micros{2'000'000});
    cfg.schedule = build_schedule(60, 6, 2);
    const auto r = Simulation(cfg, all_at_zero(3), {}).run();
    ASSERT_FALSE(r.frame_stubs.empty());
    for (const auto& f : r.frame_stubs) {
        EXPECT_EQ(gate_capture(cfg.schedule, f.exposure_start, f.exposure).kind, CaptureDecision::Kind::Admit);
        EXPECT_TRUE(oracle::brute_admit(cfg.schedule, f.exposure_start.count(), f.exposure.count()));
        EXPECT_EQ(frame_index(cfg.schedule, f.exposure_start), f.frame);
    }
    // Roughly one stub per frame per site once joined.
    EXPECT_NEAR(static_cast<double>(r.frame_stubs.size()) / 3, 2'000'000.0 / 16667 - 1, 3);
    // Zero loss: every stub from a peer arrives unless still in flight at the horizon.
    for (const auto& [id, c] : r.site_counters) {
        std::uint64_t due = 0;
        for (const auto& f : r.frame_stubs) {
            due += f.sender != id && f.exposure_start + cfg.network.base_latency <= cfg.horizon;
        }
        EXPECT_EQ(c.frames_received, due) << id.str();
    }
}

TEST(Simulation, FiveWayMesh) {
    std::vector<ParticipantPlan> plans;
    const auto ids = oracle::people(5);
    for (std::size_t i = 0; i < ids.size(); ++i) {
        plans.push_back({ids[i], Micros{static_cast<long>(i) * 100'000}, std::nullopt});
    }
    const auto r = Simulation(config(Micros{30'000}, Micros{5'000}, Micros{3'000'000}), plans, {}).run();
    EXPECT_EQ(r.peak_link_count, 10u);
    EXPECT_EQ(r.link_count, 10u);
    std::vector<SlotMap> maps;
    for (const auto& v : r.views) {
        EXPECT_EQ(v.ring, r.final_ring) << v.site.str();
        ASSERT_TRUE(v.slot_map);
        maps.push_back(*v.slot_map);
    }
    EXPECT_TRUE(verify_global_consistency(maps, r.final_ring).empty());
    EXPECT_EQ(r.final_ring.order, ids);  // arrival order
}

TEST(Simulation, SilentSiteTimesOut) {
    auto cfg = config(Micros{30'000}, Micros{5'000}, Micros{12'000'000});
    const Micros fault{5'000'000};
    cfg.network.faults.push_back({"E"_pid, fault, 1.0});
    const auto r = Simulation(cfg, all_at_zero(5), {}).run();
    ASSERT_EQ(r.departures.size(), 1u);
    const auto& d = r.departures[0];
    EXPECT_EQ(d.who, "E"_pid);
    EXPECT_EQ(d.reason, DepartureReason::HeartbeatTimeout);
    EXPECT_GT(d.at, fault);
    EXPECT_LE(d.at, fault + cfg.heartbeat_timeout);
    EXPECT_EQ(r.link_count, 6u);
    EXPECT_FALSE(r.final_ring.contains("E"_pid));
    std::vector<SlotMap> maps;
    for (const auto& v : r.views) {
        if (v.site == "E"_pid) {
            continue;
        }
        EXPECT_EQ(v.ring, r.final_ring);
        ASSERT_TRUE(v.slot_map);
        EXPECT_EQ(v.slot_map->slots.size(), 3u);
        maps.push_back(*v.slot_map);
    }
    EXPECT_TRUE(verify_global_consistency(maps, r.final_ring).empty());
}

TEST(Simulation, PlannedLeave) {
    auto plans = all_at_zero(3);
    plans[1].leave_at = Micros{2'000'000};
    std::vector<ScriptedGaze> script{
        {Micros{500'000}, "A"_pid, GazeChoice::target("B"_pid)},
        {Micros{500'000}, "B"_pid, GazeChoice::target("A"_pid)},
    };
    const auto r = Simulation(config(Micros{10'000}, Micros{0}, Micros{4'000'000}), plans, script).run();
    ASSERT_EQ(r.departures.size(), 1u);
    EXPECT_EQ(r.departures[0].reason, DepartureReason::Leave);
    ASSERT_EQ(r.ground_truth.size(), 1u);
    EXPECT_EQ(r.ground_truth[0].end, r.departures[0].at);  // the episode ends with the departure
    EXPECT_EQ(r.final_ring.order, (std::vector{"A"_pid, "C"_pid}));
    const auto& a = view_of(r, "A"_pid);
    ASSERT_EQ(a.episode_log.size(), 1u);
    EXPECT_TRUE(a.episode_log[0].end.has_value());
    EXPECT_TRUE(reconcile_views(r.views, Micros{10'000}).agrees);
}

TEST(Simulation, ScriptErrorsAreRecorded) {
    std::vector<ScriptedGaze> script{
        {Micros{0}, "A"_pid, GazeChoice::slot(0)},               // not joined yet
        {Micros{500'000}, "A"_pid, GazeChoice::slot(7)},         // no such slot
        {Micros{600'000}, "A"_pid, GazeChoice::target("Q"_pid)}, // not in the session
    };
    const auto r = Simulation(config(Micros{1'000}, Micros{0}, Micros{1'000'000}), all_at_zero(2), script).run();
    EXPECT_EQ(r.rejected.size(), 3u);
}

TEST(Simulation, CapacityEnforced) {
    auto cfg = config(Micros{0}, Micros{0}, Micros{1'000'000});
    cfg.capacity = 3;
    const auto r = Simulation(cfg, all_at_zero(4), {}).run();
    EXPECT_EQ(r.join_errors.size(), 1u);
    EXPECT_EQ(r.final_ring.order.size(), 3u);
}

TEST(Simulation, ConstructorRejectsBadPlans) {
    auto plans = all_at_zero(2);
    plans.push_back(plans[0]);
    EXPECT_THROW(Simulation(config(Micros{0}, Micros{0}, Micros{1}), plans, {}), Error);
    EXPECT_THROW(Simulation(config(Micros{0}, Micros{0}, Micros{1}), {{"@x"_pid, Micros{0}, std::nullopt}}, {}),
                 Error);
}

TEST(Simulation, Deterministic) {
    std::mt19937_64 rng(123);
    const auto script = random_script(rng, 4, 80);
    auto cfg = config(Micros{40'000}, Micros{10'000}, Micros{20'000'000}, 42);
    cfg.network.loss_rate = 0.05;
    const auto a = Simulation(cfg, all_at_zero(4), script).run();
    const auto b = Simulation(cfg, all_at_zero(4), script).run();
    EXPECT_EQ(a.network, b.network);
    EXPECT_EQ(a.ground_truth, b.ground_truth);
    ASSERT_EQ(a.views.size(), b.views.size());
    for (std::size_t i = 0; i < a.views.size(); ++i) {
        EXPECT_EQ(a.views[i].episode_log, b.views[i].episode_log);
        EXPECT_EQ(a.observed.at(a.views[i].site), b.observed.at(b.views[i].site));
    }
    cfg.network.seed = 43;
    EXPECT_NE(Simulation(cfg, all_at_zero(4), script).run().network, a.network);
}
