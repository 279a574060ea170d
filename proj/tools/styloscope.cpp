#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "styloscope/config.hpp"
#include "styloscope/pipeline.hpp"

int main(int argc, char** argv) {
  CLI::App app{"styloscope: last-token embedding geometry of literary style"};
  app.require_subcommand(1, 1);

  std::string config_path;
  std::string out_dir;
  bool verbose = false;
  for (auto name : styloscope::kCommands) {
    auto* sub = app.add_subcommand(std::string(name));
    sub->add_option("--config", config_path, "run configuration (JSON)")->required();
    sub->add_option("--out", out_dir, "override output_dir");
    sub->add_flag("--verbose,-v", verbose, "log progress to stderr");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  auto logger = spdlog::stderr_color_st("styloscope");
  spdlog::set_default_logger(logger);
  spdlog::set_level(verbose ? spdlog::level::info : spdlog::level::warn);

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    auto config = styloscope::load_config(config_path);
    if (!out_dir.empty()) config.output_dir = out_dir;
    const auto result = styloscope::run_command(command, config);
    for (const auto& a : result.artifacts) std::cout << a << '\n';
    return 0;
  } catch (const styloscope::Error& e) {
    std::cerr << "styloscope " << command << ": " << styloscope::to_string(e.code()) << ": " << e.what()
              << '\n';
    return styloscope::exit_status(e.code());
  } catch (const std::exception& e) {
    std::cerr << "styloscope " << command << ": " << e.what() << '\n';
    return 2;
  }
}
