#include "tsf/grid.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>
#include <thread>

namespace tsf {

std::vector<GridCase> default_grid_cases() { return {{12, 6}, {30, 6}, {50, 30}}; }

std::size_t GridReport::failed() const {
  return static_cast<std::size_t>(std::count_if(cells.begin(), cells.end(), [](const GridCell& c) { return !c.ok; }));
}

namespace {

std::string case_tag(const GridCase& c) {
  return "W" + std::to_string(c.window) + "H" + std::to_string(c.horizon);
}

}  // namespace

std::uint64_t cell_model_seed(std::uint64_t root, ModelKind kind, const GridCase& c) {
  return derive_seed(root, "model/" + to_string(kind) + "/" + case_tag(c));
}

std::uint64_t cell_train_seed(std::uint64_t root, ModelKind kind, const GridCase& c) {
  return derive_seed(root, "train/" + to_string(kind) + "/" + case_tag(c));
}

std::uint64_t case_split_seed(std::uint64_t root, const GridCase& c) {
  return derive_seed(root, "split/" + case_tag(c));
}

namespace {

void run_cell(GridCell& cell, const DatasetSplit& data, const GridOptions& opt) {
  const auto t0 = std::chrono::steady_clock::now();
  ModelSpec spec = opt.base;
  spec.kind = cell.kind;
  spec.window = cell.grid_case.window;
  spec.horizon = cell.grid_case.horizon;
  Model model(spec, cell_model_seed(opt.seed, cell.kind, cell.grid_case));
  TrainConfig tc = opt.train;
  tc.seed = cell_train_seed(opt.seed, cell.kind, cell.grid_case);
  const auto result = train(model, data, tc);
  cell.parameters = model.count_parameters();
  cell.epochs_run = result.log.size();
  cell.best_epoch = result.best_epoch;
  cell.train = evaluate(model, data.train, data.stats, "train");
  cell.validation = evaluate(model, data.validation, data.stats, "validation");
  cell.test = evaluate(model, data.test, data.stats, "test");
  cell.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  cell.ok = true;
}

void annotate(GridReport& report, const std::vector<ModelKind>& kinds, const std::vector<GridCase>& cases) {
  auto find = [&](ModelKind k, const GridCase& c) -> const GridCell* {
    for (const auto& cell : report.cells) {
      if (cell.kind == k && cell.grid_case == c && cell.ok) return &cell;
    }
    return nullptr;
  };
  auto fmt = [](double v) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(3) << v;
    return os.str();
  };

  // Effect of a longer window at equal horizon.
  for (const auto k : kinds) {
    for (std::size_t a = 0; a < cases.size(); ++a) {
      for (std::size_t b = 0; b < cases.size(); ++b) {
        if (cases[a].horizon != cases[b].horizon || cases[b].window <= cases[a].window) continue;
        const auto* small = find(k, cases[a]);
        const auto* large = find(k, cases[b]);
        if (!small || !large) continue;
        const bool better = large->test.mse < small->test.mse;
        report.annotations.push_back("[non-binding] " + to_string(k) + ", H=" + std::to_string(cases[a].horizon) +
                                     ": test MSE x1e3 " + fmt(small->test.mse * 1e3) + " at W=" +
                                     std::to_string(cases[a].window) + " vs " + fmt(large->test.mse * 1e3) +
                                     " at W=" + std::to_string(cases[b].window) +
                                     (better ? " (larger W better)" : " (larger W not better)"));
      }
    }
  }

  // Ranking by test R^2 against the reference order.
  const std::vector<ModelKind> reference{ModelKind::VTst, ModelKind::Lstm, ModelKind::TstLstm, ModelKind::EncTst,
                                         ModelKind::EncTstDecLstm};
  for (const auto& c : cases) {
    std::vector<const GridCell*> ok;
    for (const auto k : kinds) {
      if (const auto* cell = find(k, c); cell && cell->test.r2_pooled.defined) ok.push_back(cell);
    }
    if (ok.size() < 2) continue;
    std::stable_sort(ok.begin(), ok.end(), [](const GridCell* a, const GridCell* b) {
      return a->test.r2_pooled.value > b->test.r2_pooled.value;
    });
    std::vector<ModelKind> expected;
    for (const auto k : reference) {
      if (std::any_of(ok.begin(), ok.end(), [k](const GridCell* p) { return p->kind == k; })) expected.push_back(k);
    }
    std::string line = "[non-binding] W=" + std::to_string(c.window) + ", H=" + std::to_string(c.horizon) +
                       " ranking by test R^2: ";
    bool same = true;
    for (std::size_t i = 0; i < ok.size(); ++i) {
      if (i) line += " > ";
      line += to_string(ok[i]->kind);
      same = same && ok[i]->kind == expected[i];
    }
    line += same ? " (matches reference order)" : " (differs from reference order";
    if (!same) {
      line += " ";
      for (std::size_t i = 0; i < expected.size(); ++i) line += (i ? " > " : "") + to_string(expected[i]);
      line += ")";
    }
    report.annotations.push_back(line);
  }
}

}  // namespace

GridReport run_grid(const std::vector<TripSeries>& raw_trips, const FeatureSchema& schema, const GridOptions& opt) {
  GridReport report;
  std::vector<std::optional<DatasetSplit>> data(opt.cases.size());
  std::vector<std::string> data_error(opt.cases.size());
  for (std::size_t i = 0; i < opt.cases.size(); ++i) {
    try {
      PipelineOptions p = opt.data;
      p.window = opt.cases[i].window;
      p.horizon = opt.cases[i].horizon;
      p.seed = case_split_seed(opt.seed, opt.cases[i]);
      data[i] = build_dataset(raw_trips, schema, p);
    } catch (const std::exception& e) {
      data_error[i] = std::string("dataset: ") + e.what();
    }
  }

  std::vector<std::size_t> cell_case;
  for (std::size_t i = 0; i < opt.cases.size(); ++i) {
    for (const auto k : opt.kinds) {
      GridCell cell;
      cell.kind = k;
      cell.grid_case = opt.cases[i];
      report.cells.push_back(cell);
      cell_case.push_back(i);
    }
  }

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < report.cells.size(); i = next++) {
      auto& cell = report.cells[i];
      const auto ci = cell_case[i];
      if (!data[ci]) {
        cell.error = data_error[ci];
        continue;
      }
      try {
        run_cell(cell, *data[ci], opt);
      } catch (const std::exception& e) {
        cell.ok = false;
        cell.error = e.what();
        ComputeGraph::current().reset();
      }
    }
  };
  const auto jobs = std::max<std::size_t>(1, std::min(opt.jobs, report.cells.size()));
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  annotate(report, opt.kinds, opt.cases);
  return report;
}

nlohmann::json to_json(const GridReport& report) {
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& c : report.cells) {
    nlohmann::json j = {{"kind", to_string(c.kind)},
                        {"window", c.grid_case.window},
                        {"horizon", c.grid_case.horizon},
                        {"ok", c.ok}};
    if (c.ok) {
      j["parameters"] = c.parameters;
      j["epochs_run"] = c.epochs_run;
      j["best_epoch"] = c.best_epoch;
      j["train"] = to_json(c.train);
      j["validation"] = to_json(c.validation);
      j["test"] = to_json(c.test);
    } else {
      j["error"] = c.error;
    }
    cells.push_back(std::move(j));
  }
  return {{"format", "tsf-grid-report"},
          {"version", kGridReportVersion},
          {"error_units", "MSE on z-scored targets"},
          {"r2_units", "physical"},
          {"cells", cells},
          {"annotations", report.annotations}};
}

std::string format_table(const GridReport& report) {
  std::vector<ModelKind> kinds;
  std::vector<GridCase> cases;
  for (const auto& c : report.cells) {
    if (std::find(kinds.begin(), kinds.end(), c.kind) == kinds.end()) kinds.push_back(c.kind);
    if (std::find(cases.begin(), cases.end(), c.grid_case) == cases.end()) cases.push_back(c.grid_case);
  }
  auto cell_of = [&](ModelKind k, const GridCase& g) -> const GridCell* {
    for (const auto& c : report.cells) {
      if (c.kind == k && c.grid_case == g) return &c;
    }
    return nullptr;
  };
  auto num = [](double v, int prec) {
    std::ostringstream os;
    if (std::isnan(v)) return std::string("n/a");
    os << std::fixed << std::setprecision(prec) << v;
    return os.str();
  };

  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> header{"Case / Metric"};
  for (const auto k : kinds) header.push_back(to_string(k));
  rows.push_back(header);
  for (const auto& g : cases) {
    rows.push_back({"W=" + std::to_string(g.window) + ", H=" + std::to_string(g.horizon)});
    const std::pair<const char*, int> metrics[] = {
        {"  # Parameters", 0}, {"  Training (MSE x1e3)", 1}, {"  Validation (MSE x1e3)", 2},
        {"  Testing (MSE x1e3)", 3}, {"  R^2 (Test)", 4}};
    for (const auto& [label, which] : metrics) {
      std::vector<std::string> row{label};
      for (const auto k : kinds) {
        const auto* c = cell_of(k, g);
        if (!c) {
          row.push_back("-");
        } else if (!c->ok) {
          row.push_back("FAILED");
        } else if (which == 0) {
          row.push_back(std::to_string(c->parameters));
        } else if (which == 1) {
          row.push_back(num(c->train.mse * 1e3, 3));
        } else if (which == 2) {
          row.push_back(num(c->validation.mse * 1e3, 3));
        } else if (which == 3) {
          row.push_back(num(c->test.mse * 1e3, 3));
        } else {
          row.push_back(c->test.r2_pooled.defined ? num(c->test.r2_pooled.value, 4) : "n/a");
        }
      }
      rows.push_back(row);
    }
  }

  std::vector<std::size_t> width(header.size(), 0);
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < r.size(); ++i) width[i] = std::max(width[i], r[i].size());
  }
  std::ostringstream os;
  for (const auto& r : rows) {
    if (r.size() == 1) {  // case label
      os << r[0] << '\n';
      continue;
    }
    for (std::size_t i = 0; i < r.size(); ++i) {
      if (i == 0) {
        os << std::left << std::setw(static_cast<int>(width[0])) << r[0];
      } else {
        os << "  " << std::right << std::setw(static_cast<int>(width[i])) << r[i];
      }
    }
    os << '\n';
  }
  std::size_t failed = report.failed();
  if (failed) {
    os << '\n';
    for (const auto& c : report.cells) {
      if (!c.ok) {
        os << "FAILED " << to_string(c.kind) << " W=" << c.grid_case.window << " H=" << c.grid_case.horizon << ": "
           << c.error << '\n';
      }
    }
  }
  if (!report.annotations.empty()) {
    os << '\n';
    for (const auto& a : report.annotations) os << a << '\n';
  }
  return os.str();
}

}  // namespace tsf
