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

#include <map>
#include <memory>
#include <random>

#include <gtest/gtest.h>

#include "seethrough/live/live_session.hpp"
#include "support/oracles.hpp"

using namespace seethrough;
using namespace seethrough::live;
using session::SessionMessage;

namespace {

// A console that records every line the host sends it.
struct Console {
    ParticipantId id;
    ConnectionId conn = 0;
    std::uint64_t seq = 0;
    std::vector<SessionMessage> inbox;

    template <class P>
    std::string line(P payload, Micros t = Micros{0}) {
        return session::encode_message({++seq, id, t, session::Payload{std::move(payload)}});
    }

    template <class P>
    std::vector<const P*> received() const {
        std::vector<const P*> out;
        for (const auto& m : inbox) {
            if (const auto* p = std::get_if<P>(&m.payload)) {
                out.push_back(p);
            }
        }
        return out;
    }

    std::vector<LogEvent> events() const {
        std::vector<LogEvent> out;
        for (const auto* e : received<session::EventPayload>()) {
            out.push_back(e->event);
        }
        return out;
    }
};

class Harness {
public:
    explicit Harness(LiveSession::Config c = {}) : session(std::move(c)) {}

    Console& open(const char* id) {
        auto console = std::make_unique<Console>(Console{ParticipantId(id)});
        Console* raw = console.get();
        raw->conn = session.connect([raw](const std::string& l) { raw->inbox.push_back(session::decode_message(l)); });
        consoles.push_back(std::move(console));
        return *raw;
    }

    Console& join(const char* id, Micros now) {
        auto& c = open(id);
        session.on_line(c.conn, c.line(session::JoinPayload{}), now);
        return c;
    }

    void look(Console& c, std::optional<std::size_t> slot, Micros now) {
        session.on_line(c.conn, c.line(session::GazeSlotPayload{slot}), now);
    }

    LiveSession session;
    std::vector<std::unique_ptr<Console>> consoles;
};

std::vector<LogEvent> sorted(std::vector<LogEvent> v) {
    sort_log(v);
    return v;
}

}  // namespace

TEST(LiveSession, ThreeJoinsGetTwoSlotsEach) {
    Harness h;
    auto& a = h.join("A", Micros{0});
    auto& b = h.join("B", Micros{10});
    auto& c = h.join("C", Micros{20});
    EXPECT_EQ(h.session.link_count(), 3u);
    EXPECT_EQ(h.session.ring().order, oracle::people(3));
    ASSERT_EQ(c.received<session::WelcomePayload>().size(), 1u);
    EXPECT_EQ(c.received<session::WelcomePayload>()[0]->slot_map.slots, (std::vector{"A"_pid, "B"_pid}));
    for (Console* x : {&a, &b}) {
        const auto updates = x->received<session::RingUpdatePayload>();
        ASSERT_FALSE(updates.empty());
        EXPECT_EQ(updates.back()->slot_map.slots, oracle::expected_slots(h.session.ring().order, x->id));
        EXPECT_EQ(updates.back()->ring.version, 3u);
    }
}

TEST(LiveSession, LoneJoinerHasNoSlots) {
    Harness h;
    auto& a = h.join("A", Micros{0});
    ASSERT_EQ(a.received<session::WelcomePayload>().size(), 1u);
    EXPECT_TRUE(a.received<session::WelcomePayload>()[0]->slot_map.slots.empty());
}

TEST(LiveSession, ErrorsGoBackAsLines) {
    Harness h;
    auto& a = h.join("A", Micros{0});
    auto& a2 = h.open("A");
    h.session.on_line(a2.conn, a2.line(session::JoinPayload{}), Micros{1});
    ASSERT_EQ(a2.received<session::ErrorPayload>().size(), 1u);
    EXPECT_EQ(a2.received<session::ErrorPayload>()[0]->code, "DuplicateJoin");

    h.session.on_line(a.conn, "{\"kind\":", Micros{2});
    h.look(a, 3, Micros{3});  // no peers yet
    auto& ghost = h.open("G");
    h.look(ghost, 0, Micros{4});  // never joined
    const auto errors = a.received<session::ErrorPayload>();
    ASSERT_EQ(errors.size(), 2u);
    EXPECT_EQ(errors[0]->code, "InvalidMessage");
    EXPECT_EQ(errors[1]->code, "SlotOutOfRange");
    EXPECT_EQ(ghost.received<session::ErrorPayload>().at(0)->code, "UnknownParticipant");
    EXPECT_EQ(h.session.counters().errors_sent, 4u);
}

TEST(LiveSession, SessionFull) {
    Harness h({FrameSchedule{}, Micros{0}, 2, Micros{3'000'000}, "t"});
    h.join("A", Micros{0});
    h.join("B", Micros{0});
    auto& c = h.join("C", Micros{0});
    EXPECT_EQ(c.received<session::ErrorPayload>().at(0)->code, "SessionFull");
}

TEST(LiveSession, ThreePartyEventsPushed) {
    Harness h;  // debounce 100 ms
    auto& a = h.join("A", Micros{0});
    auto& b = h.join("B", Micros{0});
    auto& c = h.join("C", Micros{0});
    h.look(c, 0, Micros{500'000});
    h.look(a, 0, Micros{1'000'000});  // A looks at B
    h.look(b, 1, Micros{1'000'000});  // B looks at A
    h.session.tick(Micros{1'050'000});
    EXPECT_TRUE(c.events().empty());  // still inside the debounce
    h.session.tick(Micros{1'200'000});
    const std::vector<LogEvent> opened{{Micros{1'000'000}, LogEvent::Type::Open, "A"_pid, "B"_pid},
                                       {Micros{1'000'000}, LogEvent::Type::ExclusionStart, "C"_pid, std::nullopt}};
    EXPECT_EQ(c.events(), opened);
    EXPECT_EQ(a.events(), opened);

    // Relayed gaze carries the resolved participant, not the slot.
    const auto gazes = c.received<session::GazePayload>();
    ASSERT_EQ(gazes.size(), 2u);
    EXPECT_EQ(gazes[0]->target, "B"_pid);
    EXPECT_EQ(gazes[1]->target, "A"_pid);

    h.look(a, std::nullopt, Micros{11'000'000});
    h.look(b, std::nullopt, Micros{11'000'000});
    const auto rep = h.session.finish(Micros{12'000'000});
    EXPECT_EQ(rep.stats.exclusion.at("C"_pid), Micros{10'000'000});
    EXPECT_EQ(c.events().size(), 4u);
    EXPECT_EQ(c.events()[2], (LogEvent{Micros{11'000'000}, LogEvent::Type::Close, "A"_pid, "B"_pid}));
    EXPECT_EQ(c.events()[3], (LogEvent{Micros{11'000'000}, LogEvent::Type::ExclusionEnd, "C"_pid, std::nullopt}));
}

TEST(LiveSession, LateJoinerCatchesUp) {
    Harness h({FrameSchedule{}, Micros{0}, 8, Micros{3'000'000}, "t"});
    auto& a = h.join("A", Micros{0});
    auto& b = h.join("B", Micros{0});
    h.look(a, 0, Micros{100});
    h.look(b, 0, Micros{200});
    auto& c = h.join("C", Micros{300});
    const auto events = c.events();
    ASSERT_EQ(events.size(), 2u);
    EXPECT_EQ(events[0], (LogEvent{Micros{200}, LogEvent::Type::Open, "A"_pid, "B"_pid}));
    EXPECT_EQ(events[1].type, LogEvent::Type::ExclusionStart);
    EXPECT_EQ(events[1].a, "C"_pid);
    EXPECT_EQ(c.received<session::GazePayload>().size(), 2u);
}

TEST(LiveSession, DisconnectAndTimeoutDepart) {
    Harness h;
    auto& a = h.join("A", Micros{0});
    auto& b = h.join("B", Micros{0});
    h.join("C", Micros{0});
    h.session.disconnect(b.conn, Micros{1'000'000});
    EXPECT_EQ(h.session.ring().order, (std::vector{"A"_pid, "C"_pid}));
    EXPECT_EQ(a.received<session::RingUpdatePayload>().back()->slot_map.slots, std::vector{"C"_pid});

    h.session.on_line(a.conn, a.line(session::HeartbeatPayload{}), Micros{2'500'000});
    h.session.tick(Micros{3'000'000});  // C silent since 0
    EXPECT_EQ(h.session.ring().order, std::vector{"A"_pid});
    h.session.tick(Micros{5'499'999});
    EXPECT_EQ(h.session.ring().order, std::vector{"A"_pid});
    h.session.tick(Micros{5'500'000});
    EXPECT_TRUE(h.session.ring().order.empty());
    const auto rep = h.session.finish(Micros{6'000'000});
    ASSERT_EQ(rep.departures.size(), 3u);
    EXPECT_EQ(rep.departures[0].reason, session::DepartureReason::Leave);
    EXPECT_EQ(rep.departures[1].reason, session::DepartureReason::HeartbeatTimeout);
}

TEST(LiveSession, StaleAndForgedLinesDropped) {
    Harness h;
    auto& a = h.join("A", Micros{0});
    h.join("B", Micros{0});
    const auto first = a.line(session::GazeSlotPayload{0});
    h.session.on_line(a.conn, first, Micros{10});
    h.session.on_line(a.conn, first, Micros{20});
    EXPECT_EQ(h.session.counters().stale_dropped, 1u);
    h.session.on_line(a.conn, session::encode_message({99, "B"_pid, Micros{0}, session::HeartbeatPayload{}}),
                      Micros{30});
    EXPECT_EQ(a.received<session::ErrorPayload>().back()->code, "InvalidMessage");
}

// Whatever the interleaving, the EVENT stream pushed live is exactly the event
// log of the finished session.
TEST(LiveSession, PushedEventsEqualFinalLog) {
    std::mt19937_64 rng(2024);
    for (int round = 0; round < 150; ++round) {
        const Micros debounce{std::array{0L, 1'000L, 5'000L}[rng() % 3]};
        Harness h({FrameSchedule{}, debounce, 8, Micros{1'000'000'000}, "t"});
        const std::size_t n = 2 + rng() % 4;
        std::vector<Console*> consoles;
        for (const auto& p : oracle::people(n)) {
            consoles.push_back(&h.join(p.str().c_str(), Micros{0}));
        }
        Micros t{0};
        for (int i = 0; i < 80; ++i) {
            t += Micros{static_cast<long>(rng() % 3000)};
            auto& c = *consoles[rng() % n];
            if (rng() % 4 == 0) {
                h.session.tick(t);
            } else {
                h.look(c, rng() % 5 == 0 ? std::nullopt : std::optional<std::size_t>(rng() % (n - 1)), t);
            }
        }
        const auto rep = h.session.finish(t + Micros{1000});
        const auto want = sorted(build_event_log(rep.episodes, rep.members, rep.horizon));
        EXPECT_EQ(sorted(h.session.pushed_events()), want) << "round " << round;
        EXPECT_EQ(sorted(consoles[0]->events()), want) << "round " << round;
    }
}

TEST(LiveSession, ReportMatchesOfflineDetector) {
    Harness h;
    auto& a = h.join("A", Micros{0});
    auto& b = h.join("B", Micros{0});
    h.look(a, 0, Micros{1'000});
    h.look(b, 0, Micros{2'000});
    h.look(a, std::nullopt, Micros{500'000});
    const auto rep = h.session.finish(Micros{600'000});
    const std::vector<GazeUpdate> trace{{"A"_pid, "B"_pid, Micros{1'000}},
                                        {"B"_pid, "A"_pid, Micros{2'000}},
                                        {"A"_pid, std::nullopt, Micros{500'000}}};
    EXPECT_EQ(rep.episodes, oracle::episodes(trace, Micros{100'000}, Micros{600'000}));
    EXPECT_TRUE(h.session.finished());
}

TEST(LiveSession, DisconnectAfterFinishIsHarmless) {
    Harness h;
    auto& a = h.join("A", Micros{0});
    h.join("B", Micros{0});
    const auto rep = h.session.finish(Micros{1'000});
    h.session.disconnect(a.conn, Micros{2'000});
    h.session.tick(Micros{3'000});
    EXPECT_EQ(h.session.finish(Micros{4'000}).horizon, rep.horizon);
}
