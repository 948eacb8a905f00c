#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <regex>
#include <sstream>

#include "plaus/errors.hpp"
#include "plaus/report/report.hpp"

using namespace plaus;

namespace {

std::filesystem::path scratch_dir(const std::string& name) {
  auto d = std::filesystem::temp_directory_path() / ("plaus_report_" + name);
  std::filesystem::remove_all(d);
  std::filesystem::create_directories(d);
  return d;
}

TraceGrid grid_of(std::vector<std::vector<double>> aie) {
  TraceGrid g;
  g.role = Role::verb;
  g.site = Site::mlp_out;
  g.counts.assign(aie.size(), 3);
  g.aie = std::move(aie);
  g.n_samples = 3;
  g.ate = 0.25;
  g.seed = 9;
  return g;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct Cell {
  std::string row;
  int layer;
  double value;
};

std::vector<Cell> svg_cells(const std::string& svg) {
  std::regex re(R"re(<rect class="cell"[^>]*data-row="([^"]*)" data-layer="(\d+)" data-value="([^"]+)")re");
  std::vector<Cell> out;
  for (auto it = std::sregex_iterator(svg.begin(), svg.end(), re); it != std::sregex_iterator(); ++it)
    out.push_back({(*it)[1], std::stoi((*it)[2]), std::stod((*it)[3])});
  return out;
}

// Rows over ids "r0".."r{n-1}" with labels drawn at random.
std::vector<PredictionRow> random_table(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution coin(0.5);
  std::vector<PredictionRow> t(n);
  for (std::size_t i = 0; i < n; ++i) {
    t[i].id = "r" + std::to_string(i);
    t[i].gold = coin(rng) ? Label::True : Label::False;
    t[i].pre = coin(rng) ? Label::True : Label::False;
    t[i].post = coin(rng) ? Label::True : Label::False;
  }
  return t;
}

double f1_oracle(const std::vector<PredictionRow>& t) {
  double total = 0.0;
  for (Label c : {Label::True, Label::False}) {
    double tp = 0, fp = 0, fn = 0;
    for (const auto& r : t) {
      tp += r.post == c && r.gold == c;
      fp += r.post == c && r.gold != c;
      fn += r.post != c && r.gold == c;
    }
    total += tp == 0 ? 0.0 : 2 * tp / (2 * tp + fp + fn);
  }
  return 100.0 * total / 2.0;
}

}  // namespace

TEST_CASE("heatmap has one cell per class and layer") {
  std::vector<std::vector<double>> aie(8, std::vector<double>(6));
  for (std::size_t r = 0; r < 8; ++r)
    for (std::size_t c = 0; c < 6; ++c) aie[r][c] = 0.01 * double(r) - 0.02 * double(c);
  const auto g = grid_of(aie);
  const auto cells = svg_cells(heatmap_svg(g));
  REQUIRE(cells.size() == 48);
  for (const auto& cell : cells) {
    auto r = std::size_t(std::find_if(std::begin(kTokenClasses), std::end(kTokenClasses),
                                      [&](TokenClass t) { return to_string(t) == cell.row; }) -
                         std::begin(kTokenClasses));
    REQUIRE(r < 8);
    CHECK(cell.value == aie[r][std::size_t(cell.layer - 1)]);
  }
  const auto svg = heatmap_svg(g);
  CHECK(svg.find("\"role\":\"verb\"") != std::string::npos);
  CHECK(svg.find("\"n_samples\":3") != std::string::npos);
}

TEST_CASE("single-row profile peaks at layer 5") {
  const std::vector<double> profile = {0.0, 0.1, 0.2, 0.3, 0.5, 0.4, 0.4, 0.3, 0.2, 0.0};
  const auto cells = svg_cells(heatmap_svg(grid_of({profile})));
  REQUIRE(cells.size() == profile.size());
  const auto best = std::max_element(cells.begin(), cells.end(),
                                     [](const Cell& a, const Cell& b) { return a.value < b.value; });
  CHECK(best->layer == 5);
  CHECK(best->row == "row 1");
}

TEST_CASE("empty grid cannot be drawn") {
  CHECK_THROWS_AS(heatmap_svg(TraceGrid{}), ContractError);
}

TEST_CASE("exported heatmap CSV round-trips") {
  const auto dir = scratch_dir("export");
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n(0.0, 0.3);
  std::vector<std::vector<double>> aie(8, std::vector<double>(5));
  for (auto& row : aie)
    for (auto& v : row) v = n(rng);
  const auto g = grid_of(aie);
  const auto files = export_heatmap(g, dir / "verb_mlp");
  CHECK(std::filesystem::exists(files.svg));
  CHECK(std::filesystem::exists(files.meta));
  const auto back = load_grid(files.csv);
  REQUIRE(back.aie.size() == 8);
  for (std::size_t r = 0; r < 8; ++r)
    for (std::size_t c = 0; c < 5; ++c) CHECK(std::abs(back.aie[r][c] - aie[r][c]) < 1e-12);
  CHECK(slurp(files.svg) == heatmap_svg(g));
  std::filesystem::remove_all(dir);
}

TEST_CASE("split metrics match an independent recomputation") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto t = random_table(40 + seed, seed);
    const auto m = split_metrics("inference_1", t);
    CHECK(m.n_rows == t.size());
    CHECK(std::abs(m.f1 - f1_oracle(t)) < 1e-9);
    std::size_t wrong = 0, fixed = 0, right = 0, broken = 0;
    for (const auto& r : t) {
      if (r.pre != r.gold) {
        ++wrong;
        fixed += r.post == r.gold;
      } else {
        ++right;
        broken += r.post != r.gold;
      }
    }
    if (wrong) {
      REQUIRE(m.efficacy);
      CHECK(std::abs(*m.efficacy - 100.0 * double(fixed) / double(wrong)) < 1e-9);
    }
    if (right) {
      REQUIRE(m.relapse);
      CHECK(std::abs(*m.relapse - 100.0 * double(broken) / double(right)) < 1e-9);
    }
  }
}

TEST_CASE("id fingerprint ignores row order") {
  auto t = random_table(30, 1);
  const auto a = split_metrics("x", t);
  std::reverse(t.begin(), t.end());
  CHECK(split_metrics("x", t).ids_hash == a.ids_hash);
  t[0].id = "other";
  CHECK(split_metrics("x", t).ids_hash != a.ids_hash);
}

TEST_CASE("summary table layout") {
  const auto t1 = random_table(60, 2), t2 = random_table(80, 3);
  MethodReport base{"Base Model"};
  base.splits = {split_metrics("inference_1", t1), split_metrics("inference_2", t2)};

  SUBCASE("one method gives one row") {
    const std::vector<MethodReport> reports = {base};
    const auto table = compare_update_methods(reports);
    REQUIRE(table.rows.size() == 1);
    CHECK(table.header.size() == 3 + 6);
    CHECK(table.header[0] == "Update Method");
    CHECK(table.header[3] == "inference_1 F1 Score %");
    CHECK(table.header[8] == "inference_2 Relapse %");
    CHECK(table.rows[0][0] == "Base Model");
    CHECK(table.rows[0][3] == format_percent(base.splits[0].f1));
  }

  SUBCASE("edit rows carry token, layers and an F1 delta") {
    MethodReport edit{"Edit", "last_subject", "1-3"};
    auto t1b = t1;
    for (auto& r : t1b) r.post = r.gold;
    edit.splits = {split_metrics("inference_1", t1b), split_metrics("inference_2", t2)};
    const std::vector<MethodReport> reports = {base, edit};
    const auto table = compare_update_methods(reports);
    REQUIRE(table.rows.size() == 2);
    CHECK(table.rows[1][1] == "last_subject");
    CHECK(table.rows[1][2] == "1-3");
    char want[32];
    std::snprintf(want, sizeof want, "(%+.2f)", 100.0 - base.splits[0].f1);
    CHECK(table.rows[1][3].find(want) != std::string::npos);
    CHECK(table.rows[1][6].find("(+0.00)") != std::string::npos);

    const auto csv = table.to_csv();
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
    const auto text = table.to_text();
    CHECK(std::count(text.begin(), text.end(), '\n') == 4);
  }

  SUBCASE("probe columns appear only when a report has probes") {
    MethodReport edit{"Edit", "last_verb", "2-2"};
    edit.splits = base.splits;
    ProbeScores p;
    p.by_category[ProbeCategory::unaffected_subject] = 75.0;
    p.average_unaffected = 75.0;
    edit.probes = p;
    edit.probe_efficacy = 50.0;
    const std::vector<MethodReport> reports = {base, edit};
    const auto table = compare_update_methods(reports);
    CHECK(table.header.size() == 9 + 10);
    CHECK(table.rows[0].size() == table.header.size());
    CHECK(table.rows[1][9] == format_percent(50.0));
  }

  SUBCASE("mismatched splits are rejected") {
    MethodReport other{"RFT Early Stop"};
    other.splits = {split_metrics("inference_1", random_table(61, 2)), base.splits[1]};
    const std::vector<MethodReport> reports = {base, other};
    CHECK_THROWS_AS(compare_update_methods(reports), ContractError);
    CHECK_THROWS_AS(compare_update_methods(std::span<const MethodReport>{}), ContractError);
  }
}

TEST_CASE("method reports round-trip through JSON") {
  const auto dir = scratch_dir("json");
  MethodReport a{"Base Model"};
  a.splits = {split_metrics("inference_1", random_table(20, 5))};
  MethodReport b{"Edit", "last_object", "1-3"};
  b.splits = a.splits;
  b.splits[0].efficacy = std::nullopt;
  ProbeScores p;
  p.by_category[ProbeCategory::affected_verb] = 12.5;
  p.by_category[ProbeCategory::unaffected_object] = std::nullopt;
  p.counts[ProbeCategory::affected_verb] = 8;
  p.average_affected = 12.5;
  b.probes = p;
  b.probe_efficacy = 100.0;
  const std::vector<MethodReport> in = {a, b};
  save_method_reports(dir / "m.json", in);
  const auto out = load_method_reports(dir / "m.json");
  REQUIRE(out.size() == 2);
  CHECK(compare_update_methods(out).to_csv() == compare_update_methods(in).to_csv());
  CHECK(out[1].splits[0].ids_hash == a.splits[0].ids_hash);
  CHECK(!out[1].splits[0].efficacy);
  REQUIRE(out[1].probes);
  CHECK(out[1].probes->counts.at(ProbeCategory::affected_verb) == 8);
  CHECK(!out[1].probes->by_category.at(ProbeCategory::unaffected_object));
  CHECK(!out[0].probes);
  std::filesystem::remove_all(dir);
}
