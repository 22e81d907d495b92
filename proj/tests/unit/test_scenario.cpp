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

#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "seethrough/scenario.hpp"

using namespace seethrough;
namespace fs = std::filesystem;

namespace {

const fs::path kScenarios = SEETHROUGH_SCENARIOS;

std::string error_of(const char* text) {
    try {
        parse_scenario(nlohmann::json::parse(text));
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::InvalidScenario);
        return e.what();
    }
    ADD_FAILURE() << "accepted: " << text;
    return {};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path fresh_dir(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("seethrough_test_" + name + "_" + std::to_string(::getpid()));
    fs::remove_all(dir);
    return dir;
}

}  // namespace

TEST(ParseScenario, Minimal) {
    const auto s = parse_scenario(nlohmann::json::parse(
        R"({"participants":["A",{"id":"B","join_ms":250,"leave_ms":900}],"network":{"latency_ms":5},
            "trace":[{"t_ms":300,"who":"A","slot":0},{"t_ms":400,"who":"B","target":"A"},{"t_ms":500,"who":"A","target":null}]})"));
    ASSERT_EQ(s.participants.size(), 2u);
    EXPECT_EQ(s.participants[1].join_at, Micros{250'000});
    EXPECT_EQ(s.participants[1].leave_at, Micros{900'000});
    EXPECT_EQ(s.network.base_latency, Micros{5'000});
    ASSERT_EQ(s.trace.size(), 3u);
    EXPECT_EQ(s.trace[0].choice, session::GazeChoice::slot(0));
    EXPECT_EQ(s.trace[1].choice, session::GazeChoice::target("A"_pid));
    EXPECT_EQ(s.trace[2].choice, session::GazeChoice::averted());
    EXPECT_EQ(make_sim_config(s).horizon, Micros{1'900'000});  // B leaves at 900 ms, + 1 s
    EXPECT_EQ(make_sim_config(s).debounce, Micros{100'000});
}

TEST(ParseScenario, Overrides) {
    const auto s = load_scenario(kScenarios / "three_party.json");
    const auto c = make_sim_config(s, {30.0, 10.0, 1.0, 0.0, 7u});
    EXPECT_EQ(c.schedule.period, Micros{33'333});
    EXPECT_EQ(c.schedule.capture_duration, Micros{10'000});
    EXPECT_EQ(c.schedule.capture_offset, Micros{1'000});
    EXPECT_EQ(c.debounce, Micros{0});
    EXPECT_EQ(c.network.seed, 7u);
    EXPECT_EQ(c.horizon, Micros{12'000'000});
}

TEST(ParseScenario, Rejects) {
    EXPECT_NE(error_of(R"({"network":{"latency_ms":0}})").find("participants"), std::string::npos);
    EXPECT_NE(error_of(R"({"participants":["A"]})").find("network"), std::string::npos);
    EXPECT_NE(error_of(R"({"participants":["A","A"],"network":{"latency_ms":0}})").find("duplicate"), std::string::npos);
    EXPECT_NE(error_of(R"({"participants":["@host"],"network":{"latency_ms":0}})").find("reserved"), std::string::npos);
    error_of(R"({"participants":["A"],"network":{"latency_ms":-1}})");
    error_of(R"({"participants":["A"],"network":{"latency_ms":0,"loss":2}})");
    error_of(R"({"participants":["A"],"network":{"latency_ms":0},"trace":[{"t_ms":1,"who":"Z","slot":0}]})");
    error_of(R"({"participants":["A"],"network":{"latency_ms":0},"trace":[{"t_ms":-1,"who":"A","slot":0}]})");
    error_of(R"({"participants":["A"],"network":{"latency_ms":0},"trace":[{"t_ms":1,"who":"A"}]})");
    error_of(R"({"participants":["A"],"network":{"latency_ms":0},"schedule":{"fps":0}})");
    error_of(R"({"participants":["A"],"network":{"latency_ms":0},"schedule":{"fps":60,"capture_ms":20}})");
    error_of(R"({"participants":[{"id":"A","join_ms":5,"leave_ms":5}],"network":{"latency_ms":0}})");
    error_of(R"([1])");
    EXPECT_THROW(load_scenario(kScenarios / "does_not_exist.json"), Error);
}

TEST(RunScenario, ThreePartyExclusionIsTenSeconds) {
    const auto run = run_scenario(load_scenario(kScenarios / "three_party.json"));
    const auto& rep = run.report;
    EXPECT_EQ(rep.stats.exclusion.at("C"_pid), Micros{10'000'000});
    EXPECT_EQ(rep.stats.exclusion.at("A"_pid), Micros{0});
    EXPECT_EQ(rep.stats.mutual.at(ParticipantPair("A"_pid, "B"_pid)), Micros{10'000'000});
    EXPECT_TRUE(rep.agreement.agrees);
    EXPECT_EQ(rep.exit_code(), 0);
}

TEST(RunScenario, ThreePartyUnderLatency) {
    const auto run = run_scenario(load_scenario(kScenarios / "three_party_latency.json"));
    EXPECT_TRUE(run.report.agreement.agrees);
    EXPECT_LE(run.report.agreement.max_skew, Micros{50'000});
    for (const auto& v : run.result.views) {
        ASSERT_EQ(v.episode_log.size(), 1u) << v.site.str();
        EXPECT_EQ(v.episode_log[0].pair, ParticipantPair("A"_pid, "B"_pid));
    }
}

TEST(RunScenario, PartitionDisagrees) {
    const auto run = run_scenario(load_scenario(kScenarios / "partition.json"));
    EXPECT_FALSE(run.report.agreement.agrees);
    EXPECT_EQ(run.report.exit_code(), 2);
    ASSERT_FALSE(run.report.agreement.mismatches.empty());
    bool names_c = false;
    for (const auto& m : run.report.agreement.mismatches) {
        names_c |= m.seen_at == "C"_pid || m.missing_at == "C"_pid;
    }
    EXPECT_TRUE(names_c);
}

TEST(RunScenario, EmptyTraceIsAllZeros) {
    const auto run = run_scenario(load_scenario(kScenarios / "empty_trace.json"));
    EXPECT_EQ(run.report.stats.episode_count, 0u);
    for (const auto& [who, t] : run.report.stats.exclusion) {
        EXPECT_EQ(t, Micros{0}) << who.str();
    }
    EXPECT_TRUE(run.report.exclusions.empty());
    EXPECT_EQ(run.report.exit_code(), 0);
}

TEST(RunScenario, EventLogReproducesReportTotals) {
    for (const char* name : {"three_party.json", "jittery_mesh.json", "mesh_five.json", "partition.json"}) {
        const auto run = run_scenario(load_scenario(kScenarios / name));
        std::istringstream in(render_log(build_event_log(run.report.episodes, run.report.members, run.report.horizon)));
        const auto summary = summarize_log(in);
        EXPECT_EQ(summary.stats.mutual, run.report.stats.mutual) << name;
        EXPECT_EQ(summary.stats.episode_count, run.report.stats.episode_count) << name;
        for (const auto& [who, total] : summary.stats.exclusion) {
            EXPECT_EQ(total, run.report.stats.exclusion.at(who)) << name << " " << who.str();
        }
    }
}

TEST(RunScenario, OutputsAreByteIdentical) {
    const auto a = fresh_dir("a");
    const auto b = fresh_dir("b");
    run_scenario(kScenarios / "jittery_mesh.json", a, {});
    run_scenario(kScenarios / "jittery_mesh.json", b, {});
    std::size_t files = 0;
    for (const auto& entry : fs::recursive_directory_iterator(a)) {
        if (!entry.is_regular_file()) {
            continue;
        }
        ++files;
        const auto rel = fs::relative(entry.path(), a);
        EXPECT_EQ(slurp(entry.path()), slurp(b / rel)) << rel;
    }
    EXPECT_EQ(files, 2u + 5u);  // report, events, one per site
    const auto report = nlohmann::json::parse(slurp(a / "report.json"));
    EXPECT_EQ(report["seed"], 42);
    EXPECT_TRUE(report["agreement"]["agrees"].get<bool>());
    fs::remove_all(a);
    fs::remove_all(b);
}

TEST(RunScenario, SeedChangesNetworkOutcome) {
    const auto s = load_scenario(kScenarios / "jittery_mesh.json");
    const auto x = run_scenario(s, {.seed = 1});
    const auto y = run_scenario(s, {.seed = 2});
    EXPECT_NE(report_to_json(x.report)["agreement"].dump(), report_to_json(y.report)["agreement"].dump());
}

TEST(SiteFileStem, Sanitizes) {
    EXPECT_EQ(site_file_stem("caf\xc3\xa9/x y"_pid), "caf___x_y");
    EXPECT_EQ(site_file_stem("A-1.b_c"_pid), "A-1.b_c");
}
