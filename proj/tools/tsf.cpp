// Command-line front end: datagen, train, grid, predict, gradcheck.

#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "tsf/commands.hpp"

namespace {

struct ConfigArgs {
  std::string file;
  std::vector<std::string> overrides;
  std::string output;
  std::size_t jobs = 0;
};

void add_config_options(CLI::App* app, ConfigArgs& args) {
  app->add_option("-c,--config", args.file, "JSON run configuration");
  app->add_option("-s,--set", args.overrides, "Override one key, e.g. train.epochs=5")->allow_extra_args(false);
  app->add_option("-o,--output", args.output, "Output directory (overrides output_dir)");
}

tsf::RunConfig resolve(const ConfigArgs& args) {
  nlohmann::json j = nlohmann::json::object();
  if (!args.file.empty()) {
    std::ifstream is(args.file);
    if (!is) throw tsf::ConfigError({"cannot open config file " + args.file});
    try {
      j = nlohmann::json::parse(is);
    } catch (const nlohmann::json::parse_error& e) {
      throw tsf::ConfigError({args.file + ": " + e.what()});
    }
  }
  auto overrides = args.overrides;
  if (!args.output.empty()) overrides.push_back("output_dir=\"" + args.output + "\"");
  if (args.jobs) overrides.push_back("jobs=" + std::to_string(args.jobs));
  return tsf::RunConfig::from_json(tsf::apply_overrides(std::move(j), overrides));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Time-series forecasting toolkit for battery SOC and temperature"};
  app.require_subcommand(1);

  ConfigArgs datagen_args, train_args, grid_args;
  auto* datagen = app.add_subcommand("datagen", "Write synthetic trip CSVs and a seed manifest");
  add_config_options(datagen, datagen_args);
  auto* train = app.add_subcommand("train", "Build the dataset, train one model, evaluate every split");
  add_config_options(train, train_args);
  auto* grid = app.add_subcommand("grid", "Train and evaluate every (kind, window, horizon) cell");
  add_config_options(grid, grid_args);
  grid->add_option("-j,--jobs", grid_args.jobs, "Worker threads for independent cells");

  tsf::PredictRequest predict_req;
  std::string predict_config;
  auto* predict = app.add_subcommand("predict", "Forecast from one trip with a trained checkpoint");
  predict->add_option("--checkpoint", predict_req.checkpoint, "Checkpoint file")->required();
  predict->add_option("--trip", predict_req.trip_csv, "Raw trip CSV")->required();
  predict->add_option("--start", predict_req.start, "First forecast step (model time steps)")->required();
  predict->add_option("--out", predict_req.output, "Forecast CSV to write")->required();
  predict->add_option("-c,--config", predict_config,
                      "Run configuration for preprocessing (default: config.json next to the checkpoint)");

  std::string fault;
  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of every primitive and layer");
  gradcheck->add_option("--fault", fault, "Corrupt this primitive's backward rule (checker self-test)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? tsf::kExitOk : tsf::kExitValidation;
  }

  try {
    if (datagen->parsed()) {
      tsf::cmd_datagen(resolve(datagen_args), std::cout);
    } else if (train->parsed()) {
      tsf::cmd_train(resolve(train_args), std::cout);
    } else if (grid->parsed()) {
      const auto [failed, total] = tsf::cmd_grid(resolve(grid_args), std::cout);
      if (total > 0 && failed == total) {
        std::cerr << "error: all " << total << " grid cells failed\n";
        return tsf::kExitAllCellsFailed;
      }
      if (failed) std::cerr << "warning: " << failed << " of " << total << " grid cells failed\n";
    } else if (predict->parsed()) {
      if (!predict_config.empty()) predict_req.config = tsf::load_config(predict_config);
      tsf::cmd_predict(predict_req, std::cout);
    } else if (gradcheck->parsed()) {
      const bool ok = tsf::cmd_gradcheck(std::cout, fault.empty() ? std::nullopt : std::optional<std::string>(fault));
      return ok ? tsf::kExitOk : tsf::kExitRuntime;
    }
  } catch (const tsf::ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return tsf::kExitValidation;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return tsf::kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return tsf::kExitRuntime;
  }
  return tsf::kExitOk;
}
