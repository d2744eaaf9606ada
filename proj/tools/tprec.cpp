#include <cstdlib>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "tprec/pipeline.hpp"

int main(int argc, char** argv) {
  CLI::App app{"tprec: time-aware knowledge-graph path reasoning for recommendation"};
  std::string stage_arg;
  std::string config_path;
  std::uint64_t seed = 0;
  std::string out_dir;
  std::string log_level = "info";

  std::string stages;
  for (auto s : tprec::all_stages()) stages += (stages.empty() ? "" : ", ") + std::string(tprec::stage_name(s));
  app.add_option("stage", stage_arg, "one of: " + stages)->required();
  app.add_option("--config", config_path, "pipeline config (JSON)")->required()->check(CLI::ExistingFile);
  auto* seed_opt = app.add_option("--seed", seed, "root seed (overrides the config)");
  auto* out_opt = app.add_option("--out", out_dir, "output directory (overrides the config)");
  app.add_option("--log-level", log_level, "trace, debug, info, warn, error");
  CLI11_PARSE(app, argc, argv);

  spdlog::set_default_logger(spdlog::stderr_color_mt("tprec"));
  spdlog::set_level(spdlog::level::from_str(log_level));

  try {
    const tprec::Stage stage = tprec::parse_stage(stage_arg);
    const tprec::PipelineConfig config = tprec::load_config(config_path);
    tprec::StageOptions opts;
    if (*seed_opt) opts.seed = seed;
    if (*out_opt) opts.out = out_dir;
    const auto result = tprec::run_stage(stage, config, opts);
    for (const auto& p : result.outputs) std::cout << p.string() << '\n';
    return EXIT_SUCCESS;
  } catch (const tprec::MissingArtifactError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  } catch (const tprec::ProvenanceError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return EXIT_FAILURE;
  }
}
