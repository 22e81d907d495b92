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

// seethrough: scenario runner, live session host and log summarizer.
//
//   seethrough simulate SCENARIO --out DIR [--fps 60] [--capture-ms 6]
//              [--offset-ms 0] [--seed N] [--debounce-ms 100]
//   seethrough serve --bind HOST:PORT [--tcp HOST:PORT] --out DIR [...]
//   seethrough stats LOG

#include <csignal>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "seethrough/event_log.hpp"
#include "seethrough/live/live_session.hpp"
#include "seethrough/live/server.hpp"
#include "seethrough/scenario.hpp"

namespace {

namespace st = seethrough;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitDisagree = 2;

std::string seconds(st::Micros t) {
    std::ostringstream out;
    out << std::fixed << std::setprecision(6) << static_cast<double>(t.count()) / 1e6;
    return out.str();
}

void print_stats(std::ostream& out, const std::vector<st::ParticipantId>& members, const st::SessionStats& stats,
                 st::Micros horizon) {
    out << "horizon_s " << seconds(horizon) << "\n";
    out << "episodes " << stats.episode_count << "\n";
    out << "\n" << std::left << std::setw(24) << "pair" << "mutual_s\n";
    for (const auto& [pair, total] : stats.mutual) {
        out << std::left << std::setw(24) << (pair.first().str() + "-" + pair.second().str()) << seconds(total)
            << "\n";
    }
    out << "\n" << std::left << std::setw(24) << "member" << "exclusion_s\n";
    for (const auto& m : members) {
        const auto it = stats.exclusion.find(m);
        out << std::left << std::setw(24) << m.str() << seconds(it != stats.exclusion.end() ? it->second : st::Micros{0})
            << "\n";
    }
}

int run_simulate(const std::string& scenario_path, const std::string& out_dir, const st::RunOverrides& overrides) {
    try {
        const auto run = st::run_scenario(scenario_path, out_dir, overrides);
        const auto& rep = run.report;
        std::cout << "scenario " << rep.scenario << " seed " << rep.seed << "\n";
        std::cout << "period_us " << rep.schedule.period.count() << " display_duty " << std::fixed
                  << std::setprecision(4) << st::display_duty(rep.schedule) << " capture_rate_hz "
                  << st::capture_rate_hz(rep.schedule) << "\n";
        std::cout.unsetf(std::ios::fixed);
        print_stats(std::cout, rep.members, rep.stats, rep.horizon);
        std::cout << "\nlinks " << rep.link_count << " (peak " << rep.peak_link_count << "), departures "
                  << rep.departures.size() << "\n";
        for (const auto& d : rep.departures) {
            std::cout << "  " << d.who.str() << " at " << seconds(d.at) << " s (" << st::session::to_string(d.reason)
                      << ")\n";
        }
        std::cout << "agreement " << (rep.agreement.agrees ? "yes" : "no") << ", max skew "
                  << seconds(rep.agreement.max_skew) << " s, bound "
                  << seconds(rep.agreement.latency_bound + rep.agreement.jitter) << " s\n";
        for (const auto& m : rep.agreement.mismatches) {
            std::cout << "  mismatch: " << m.pair.first().str() << "-" << m.pair.second().str() << " ["
                      << seconds(m.episode.start) << ", " << seconds(m.episode.end) << ") seen at "
                      << m.seen_at.str() << ", missing at " << m.missing_at.str() << "\n";
        }
        std::cout << "wrote " << out_dir << "\n";
        return rep.exit_code() == 0 ? kExitOk : kExitDisagree;
    } catch (const st::Error& ex) {
        std::cerr << "error: " << ex.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& ex) {
        std::cerr << "error: " << ex.what() << "\n";
        return kExitUsage;
    }
}

int run_stats(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        std::cerr << "error: cannot open " << path << "\n";
        return kExitUsage;
    }
    try {
        const auto summary = st::summarize_log(in);
        print_stats(std::cout, summary.members, summary.stats, summary.horizon);
        return kExitOk;
    } catch (const st::Error& ex) {
        std::cerr << "error: " << path << ": " << ex.what() << "\n";
        return kExitUsage;
    }
}

int run_serve(const std::string& bind, const std::optional<std::string>& tcp_bind, const std::string& out_dir,
              const st::RunOverrides& o) {
    namespace live = st::live;
    live::LiveSession::Config config;
    try {
        config.schedule = st::build_schedule(o.fps.value_or(60.0), o.capture_ms.value_or(6.0), o.offset_ms.value_or(0.0));
        config.debounce = st::micros_from_ms(o.debounce_ms.value_or(100.0));
    } catch (const st::Error& ex) {
        std::cerr << "error: " << ex.what() << "\n";
        return kExitUsage;
    }
    live::LiveSession session(config);
    boost::asio::io_context io;
    live::Server server(io, session);
    try {
        const auto ws = server.listen_websocket(live::parse_endpoint(bind));
        std::cout << "websocket listening on " << ws << std::endl;
        if (tcp_bind) {
            const auto raw = server.listen_tcp(live::parse_endpoint(*tcp_bind));
            std::cout << "ndjson/tcp listening on " << raw << std::endl;
        }
    } catch (const std::exception& ex) {
        std::cerr << "error: cannot bind: " << ex.what() << "\n";
        return kExitUsage;
    }
    boost::asio::signal_set signals(io, SIGINT, SIGTERM);
    signals.async_wait([&](const boost::system::error_code& ec, int) {
        if (!ec) {
            server.stop();
            io.stop();
        }
    });
    server.start();
    io.run();

    const auto report = session.finish(server.now());
    try {
        live::write_live_outputs(out_dir, report);
    } catch (const std::exception& ex) {
        std::cerr << "error: " << ex.what() << "\n";
        return kExitUsage;
    }
    print_stats(std::cout, report.members, report.stats, report.horizon);
    std::cout << "wrote " << out_dir << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"See-through display session tools"};
    app.require_subcommand(1);

    st::RunOverrides overrides;
    auto add_schedule_flags = [&](CLI::App* cmd) {
        cmd->add_option("--fps", overrides.fps, "display frame rate (default 60)")->check(CLI::PositiveNumber);
        cmd->add_option("--capture-ms", overrides.capture_ms, "capture window per frame (default 6)")
            ->check(CLI::NonNegativeNumber);
        cmd->add_option("--offset-ms", overrides.offset_ms, "capture window offset in the frame (default 0)")
            ->check(CLI::NonNegativeNumber);
        cmd->add_option("--debounce-ms", overrides.debounce_ms, "minimum mutual gaze duration (default 100)")
            ->check(CLI::NonNegativeNumber);
    };

    std::string scenario_path;
    std::string out_dir;
    auto* simulate = app.add_subcommand("simulate", "run a scripted session over the simulated network");
    simulate->add_option("scenario", scenario_path, "scenario JSON file")->required();
    simulate->add_option("--out", out_dir, "output directory")->required();
    simulate->add_option("--seed", overrides.seed, "network seed (overrides the scenario)");
    add_schedule_flags(simulate);

    std::string bind;
    std::optional<std::string> tcp_bind;
    auto* serve = app.add_subcommand("serve", "host a live session for console clients");
    serve->add_option("--bind", bind, "WebSocket listen address, host:port")->required();
    serve->add_option("--tcp", tcp_bind, "also accept raw NDJSON over TCP at host:port");
    serve->add_option("--out", out_dir, "where the final report goes")->required();
    add_schedule_flags(serve);

    std::string log_path;
    auto* stats = app.add_subcommand("stats", "summarize an events.jsonl log");
    stats->add_option("log", log_path, "event log")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    if (simulate->parsed()) {
        return run_simulate(scenario_path, out_dir, overrides);
    }
    if (serve->parsed()) {
        return run_serve(bind, tcp_bind, out_dir, overrides);
    }
    return run_stats(log_path);
}
