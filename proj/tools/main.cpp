#include <csignal>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "devserve/bench.hpp"
#include "devserve/config.hpp"
#include "devserve/server.hpp"

namespace {

devserve::Server* g_server = nullptr;

void handle_signal(int) {
    if (g_server) g_server->stop();
}

devserve::AppConfig load_or_default(const std::string& path) {
    if (path.empty()) return devserve::default_config();
    return devserve::load_app_config(path);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Device-resident LLM serving emulator"};
    app.require_subcommand(1);

    std::string config_path;

    auto* serve_cmd = app.add_subcommand("serve", "Run the OpenAI-compatible HTTP endpoint");
    std::string listen;
    serve_cmd->add_option("--config", config_path, "JSON config file");
    serve_cmd->add_option("--listen", listen, "host:port override (port 0 picks one)");

    auto* bench_cmd = app.add_subcommand("bench", "Sweep load levels and write a report");
    std::string mode = "device";
    std::string out_csv = "report.csv";
    std::vector<double> rates;
    std::uint32_t hogs = 0;
    double multiplier = 1.0;
    bool wall = false;
    std::uint64_t seed_override = 0;
    double duration_override = 0;
    bench_cmd->add_option("--config", config_path, "JSON config file");
    bench_cmd->add_option("--mode", mode, "device | host")
        ->check(CLI::IsMember({"device", "host"}));
    bench_cmd->add_option("--rates", rates, "offered req/s levels (overrides the config)");
    bench_cmd->add_option("--interference-threads", hogs,
                          "CPU hog threads during wall-clock runs");
    bench_cmd->add_option("--interference-multiplier", multiplier,
                          "host-overhead scale for virtual runs");
    bench_cmd->add_flag("--wall", wall, "drive real threads on the wall clock");
    bench_cmd->add_option("--out", out_csv, "CSV output path");
    bench_cmd->add_option("--seed", seed_override, "workload seed override");
    bench_cmd->add_option("--duration", duration_override, "seconds per load level");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*serve_cmd) {
            devserve::AppConfig cfg = load_or_default(config_path);
            if (!listen.empty()) {
                const auto colon = listen.rfind(':');
                if (colon == std::string::npos) {
                    std::cerr << "--listen expects host:port\n";
                    return 2;
                }
                cfg.listen_host = listen.substr(0, colon);
                cfg.listen_port = std::stoi(listen.substr(colon + 1));
            }
            devserve::Server server(cfg);
            g_server = &server;
            std::signal(SIGINT, handle_signal);
            std::signal(SIGTERM, handle_signal);
            std::thread announce([&] {
                if (server.wait_until_ready(10.0))
                    std::cout << "listening on " << cfg.listen_host << ":" << server.port()
                              << std::endl;
            });
            const bool ok = server.serve();
            announce.join();
            g_server = nullptr;
            return ok ? 0 : 1;
        }

        devserve::BenchOptions opt;
        opt.app = load_or_default(config_path);
        opt.mode = mode == "host" ? devserve::SchedMode::host_mediated
                                  : devserve::SchedMode::device;
        opt.wall = wall;
        opt.interference_threads = hogs;
        opt.interference_multiplier = multiplier;
        opt.rates = rates;
        opt.out_csv = out_csv;
        if (seed_override != 0) opt.app.bench.seed = seed_override;
        if (duration_override > 0) opt.app.bench.duration_s = duration_override;
        return devserve::bench_main(opt, std::cout);
    } catch (const devserve::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
