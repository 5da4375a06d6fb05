#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "tsf/checkpoint.hpp"
#include "tsf/commands.hpp"

using namespace tsf;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("tsf_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

// Small synthetic run that trains in well under a second.
json small_config(const fs::path& out) {
  auto j = json::parse(R"({
    "data": {"synth": {"n_trips": 4, "length": 3000}, "train_n": 80, "val_n": 20, "test_n": 20},
    "model": {"kind": "V_TST", "n_encoders": 1, "n_decoders": 1, "n_heads": 2, "d_model": 8, "ffn_width": 8,
              "lstm_layers": 1},
    "train": {"epochs": 2, "batch_size": 16},
    "seed": 11
  })");
  j["output_dir"] = out.string();
  return j;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(TSF_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Config, DefaultsAndRoundTrip) {
  const auto c = RunConfig::from_json(json::object());
  EXPECT_EQ(c.model.kind, ModelKind::VTst);
  EXPECT_EQ(c.model.d_model, 128u);
  EXPECT_EQ(c.train.epochs, 200u);
  EXPECT_EQ(c.train.batch_size, 64u);
  EXPECT_EQ(c.data.pipeline.train_n, 4000u);
  EXPECT_EQ(c.data.pipeline.savgol_window, 21u);
  EXPECT_EQ(c.grid_cases, default_grid_cases());
  EXPECT_EQ(c.grid_kinds.size(), 5u);
  const auto echoed = c.to_json();
  EXPECT_EQ(RunConfig::from_json(echoed).to_json(), echoed);
}

TEST(Config, EveryUnknownKeyIsReported) {
  const auto j = json::parse(R"({"modle": {}, "train": {"epoch": 3, "batch_size": "x"}, "data": {"synth": {"n": 1}}})");
  try {
    RunConfig::from_json(j);
    FAIL();
  } catch (const ConfigError& e) {
    const auto& p = e.problems();
    ASSERT_GE(p.size(), 4u);
    const std::string all = e.what();
    for (const char* key : {"modle", "train.epoch", "train.batch_size", "data.synth.n"}) {
      EXPECT_NE(all.find(key), std::string::npos) << key << "\n" << all;
    }
  }
}

TEST(Config, InvalidKindNamesAllowedKinds) {
  try {
    RunConfig::from_json(json{{"model", {{"kind", "vtst2"}}}});
    FAIL();
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    for (const char* k : {"vtst2", "LSTM", "ENC_TST", "V_TST", "TST_LSTM", "ENC_TST_DEC_LSTM"}) {
      EXPECT_NE(msg.find(k), std::string::npos) << msg;
    }
  }
}

TEST(Config, OverridesParseJsonOrString) {
  auto j = apply_overrides(json::object(), {"train.epochs=7", "model.kind=LSTM", "train.grad_clip=null",
                                            "grid.cases=[[12,6]]"});
  const auto c = RunConfig::from_json(j);
  EXPECT_EQ(c.train.epochs, 7u);
  EXPECT_EQ(c.model.kind, ModelKind::Lstm);
  EXPECT_FALSE(c.train.grad_clip.has_value());
  EXPECT_EQ(c.grid_cases, (std::vector<GridCase>{{12, 6}}));
  EXPECT_THROW(apply_overrides(json::object(), {"no_equals_sign"}), ConfigError);
}

TEST(Config, SeedsFanOutFromRoot) {
  auto a = RunConfig::from_json(json{{"seed", 1}}), b = RunConfig::from_json(json{{"seed", 2}});
  EXPECT_NE(resolve_train(a).seed, resolve_train(b).seed);
  EXPECT_NE(resolve_pipeline(a).seed, resolve_train(a).seed);
  EXPECT_EQ(resolve_pipeline(a).seed, resolve_pipeline(RunConfig::from_json(json{{"seed", 1}})).seed);
}

TEST(Datagen, WritesTripsAndManifestDeterministically) {
  const auto a = scratch("datagen_a"), b = scratch("datagen_b");
  auto cfg = json::parse(R"({"data": {"synth": {"n_trips": 3, "length": 400}}, "seed": 5})");
  std::ostringstream log;
  cfg["output_dir"] = a.string();
  cmd_datagen(RunConfig::from_json(cfg), log);
  cfg["output_dir"] = b.string();
  cmd_datagen(RunConfig::from_json(cfg), log);
  std::size_t csv = 0;
  for (const auto& e : fs::directory_iterator(a)) csv += e.path().extension() == ".csv";
  EXPECT_EQ(csv, 3u);
  ASSERT_TRUE(fs::exists(a / "manifest.json"));
  const auto manifest = json::parse(slurp(a / "manifest.json"));
  EXPECT_EQ(manifest.at("trips").size(), 3u);
  for (const auto& e : fs::directory_iterator(a)) EXPECT_EQ(slurp(e.path()), slurp(b / e.path().filename()));
  EXPECT_EQ(load_trips(a, FeatureSchema::defaults()).size(), 3u);
}

TEST(Train, SmokeRunWritesArtifacts) {
  const auto dir = scratch("train");
  std::ostringstream log;
  const auto art = cmd_train(RunConfig::from_json(small_config(dir)), log);
  for (const auto& p : {art.checkpoint, art.log, art.report, art.metadata, art.config}) EXPECT_TRUE(fs::exists(p));
  const auto report = json::parse(slurp(art.report));
  bool has_test_r2 = false;
  for (const auto& s : report.at("splits")) {
    if (s.at("split") == "test") has_test_r2 = s.contains("r2_pooled");
  }
  EXPECT_TRUE(has_test_r2) << report.dump(2);
  EXPECT_EQ(slurp(art.log).substr(0, 34), "epoch,train_loss,val_loss,seconds\n");

  // The echoed config reproduces the run.
  const auto again = scratch("train_echo");
  auto echo = json::parse(slurp(art.config));
  echo["output_dir"] = again.string();
  const auto art2 = cmd_train(RunConfig::from_json(echo), log);
  EXPECT_EQ(slurp(art.checkpoint), slurp(art2.checkpoint));
  EXPECT_EQ(slurp(art.report), slurp(art2.report));
}

TEST(Predict, ForecastRowsColumnsAndHistory) {
  const auto dir = scratch("predict");
  std::ostringstream log;
  const auto art = cmd_train(RunConfig::from_json(small_config(dir)), log);
  const auto trip = synthesize_trips(1, 3000, 99)[0];
  write_trip_csv(dir / "trip.csv", trip);

  PredictRequest req{art.checkpoint, dir / "trip.csv", 20, dir / "forecast.csv", std::nullopt};
  cmd_predict(req, log);
  std::ifstream is(req.output);
  std::string header, line;
  std::getline(is, header);
  EXPECT_EQ(header, "step,time_s,phase,soc_pct,batt_temp_C,actual_soc_pct,actual_batt_temp_C");
  std::size_t observed = 0, forecast = 0;
  while (std::getline(is, line)) {
    observed += line.find(",observed,") != std::string::npos;
    forecast += line.find(",forecast,") != std::string::npos;
  }
  EXPECT_EQ(observed, 12u);
  EXPECT_EQ(forecast, 6u);

  req.start = 11;
  try {
    cmd_predict(req, log);
    FAIL();
  } catch (const UsageError& e) {
    EXPECT_NE(std::string(e.what()).find("insufficient history"), std::string::npos);
  }

  // A trip file without SOC is rejected with the channel named.
  std::ifstream raw(dir / "trip.csv");
  std::ofstream cut(dir / "nosoc.csv");
  std::getline(raw, line);
  std::vector<std::string> cols;
  std::stringstream hs(line);
  for (std::string c; std::getline(hs, c, ',');) cols.push_back(c);
  const auto soc_col = std::find(cols.begin(), cols.end(), "soc") - cols.begin();
  auto drop = [&](const std::string& row) {
    std::stringstream rs(row);
    std::string out, c;
    for (long k = 0; std::getline(rs, c, ','); ++k) {
      if (k != soc_col) out += (out.empty() ? "" : ",") + c;
    }
    return out;
  };
  cut << drop(line) << '\n';
  while (std::getline(raw, line)) cut << drop(line) << '\n';
  cut.close();
  req.trip_csv = dir / "nosoc.csv";
  req.start = 20;
  try {
    cmd_predict(req, log);
    FAIL();
  } catch (const SchemaError& e) {
    EXPECT_NE(std::string(e.what()).find("\"soc\""), std::string::npos) << e.what();
  }
}

TEST(Gradcheck, PassesAndListsEveryPrimitiveOnce) {
  std::ostringstream out;
  EXPECT_TRUE(cmd_gradcheck(out));
  const auto text = out.str();
  std::istringstream lines(text);
  std::map<std::string, int> seen;
  for (std::string line; std::getline(lines, line);) {
    std::istringstream ls(line);
    std::string name, group;
    ls >> name >> group;
    if (group == "primitive") ++seen[name];
  }
  for (const auto& op : primitive_ops()) EXPECT_EQ(seen[op], 1) << op;
  EXPECT_EQ(seen.size(), primitive_ops().size());
}

TEST(Gradcheck, CorruptedRuleIsNamed) {
  std::ostringstream out;
  EXPECT_FALSE(cmd_gradcheck(out, std::string("layer_norm")));
  const auto text = out.str();
  bool named = false;
  std::istringstream lines(text);
  for (std::string line; std::getline(lines, line);) {
    if (line.rfind("layer_norm ", 0) == 0) named = line.find("FAIL") != std::string::npos;
  }
  EXPECT_TRUE(named) << text;
}

TEST(Grid, TwoCellTable) {
  const auto dir = scratch("grid");
  auto cfg = small_config(dir);
  cfg["grid"] = json::parse(R"({"kinds": ["LSTM", "V_TST"], "cases": [[12, 6]]})");
  cfg["train"]["epochs"] = 1;
  std::ostringstream log;
  const auto [failed, total] = cmd_grid(RunConfig::from_json(cfg), log);
  EXPECT_EQ(failed, 0u);
  EXPECT_EQ(total, 2u);
  const auto report = json::parse(slurp(dir / "grid_report.json"));
  EXPECT_EQ(report.at("cells").size(), 2u);
  const auto table = slurp(dir / "grid_report.txt");
  EXPECT_NE(table.find("# Parameters"), std::string::npos);
  // Header and metric rows share one width; case labels stand alone.
  std::istringstream ls(table);
  std::set<std::size_t> widths;
  for (std::string line; std::getline(ls, line) && !line.empty();) {
    if (line.rfind("W=", 0) != 0) widths.insert(line.size());
  }
  EXPECT_EQ(widths.size(), 1u) << table;
}

TEST(Binary, ExitCodes) {
  const auto dir = scratch("binary");
  EXPECT_EQ(run_cli("gradcheck"), kExitOk);
  EXPECT_NE(run_cli("gradcheck --fault softmax"), kExitOk);
  EXPECT_EQ(run_cli("train -s model.kind=vtst2 -o " + dir.string()), kExitValidation);
  EXPECT_EQ(run_cli("train -s train.epoch=3 -o " + dir.string()), kExitValidation);
  EXPECT_EQ(run_cli("predict --checkpoint " + (dir / "missing.tsfm").string() + " --trip x.csv --start 20 --out " +
                    (dir / "f.csv").string()),
            kExitRuntime);
  // Every cell fails when no case yields enough windows.
  const auto cfg = dir / "grid.json";
  auto j = small_config(dir / "out");
  j["grid"] = json::parse(R"({"kinds": ["LSTM"], "cases": [[500, 6]]})");
  std::ofstream(cfg) << j.dump();
  EXPECT_EQ(run_cli("grid -c " + cfg.string()), kExitAllCellsFailed);
}
