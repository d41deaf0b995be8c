#include "dicl/trajdata.hpp"

#include "dicl/error.hpp"

#include <nlohmann/json.hpp>

#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <unordered_set>

namespace dicl::trajdata {

using nlohmann::json;

Trajectory Trajectory::slice(Eigen::Index begin, Eigen::Index count) const {
  require(begin >= 0 && count >= 1 && begin + count <= length(), ErrorKind::InvalidArgument,
          "trajectory slice out of range");
  Trajectory out;
  out.states = states.middleRows(begin, count);
  if (actions) out.actions = actions->middleRows(begin, count);
  if (rewards) out.rewards = rewards->segment(begin, count);
  return out;
}

void Trajectory::validate() const {
  require(states.rows() >= 1 && states.cols() >= 1, ErrorKind::Schema,
          "trajectory needs at least one step and one state dimension");
  require(states.allFinite(), ErrorKind::Schema, "non-finite value in states");
  if (actions) {
    require(actions->rows() == states.rows(), ErrorKind::Schema, "actions length differs from states");
    require(actions->allFinite(), ErrorKind::Schema, "non-finite value in actions");
  }
  if (rewards) {
    require(rewards->size() == states.rows(), ErrorKind::Schema, "rewards length differs from states");
    require(rewards->allFinite(), ErrorKind::Schema, "non-finite value in rewards");
  }
}

Trajectory make_trajectory(MatrixXd states, std::optional<MatrixXd> actions, std::optional<VectorXd> rewards) {
  Trajectory t{std::move(states), std::move(actions), std::move(rewards)};
  t.validate();
  return t;
}

Eigen::Index Dataset::state_dim() const { return trajectories.empty() ? 0 : trajectories.front().state_dim(); }
Eigen::Index Dataset::action_dim() const { return trajectories.empty() ? 0 : trajectories.front().action_dim(); }

std::size_t Dataset::total_steps() const {
  std::size_t n = 0;
  for (const auto& t : trajectories) n += static_cast<std::size_t>(t.length());
  return n;
}

// ---------------------------------------------------------------------------
// manifest

Manifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::Io, "cannot open manifest " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    fail(ErrorKind::Parse, "manifest " + path.string() + ": " + e.what());
  }
  Manifest m;
  try {
    m.state_cols = j.at("state_cols").get<std::vector<std::string>>();
    if (j.contains("action_cols")) m.action_cols = j["action_cols"].get<std::vector<std::string>>();
    if (j.contains("reward_col") && !j["reward_col"].is_null()) m.reward_col = j["reward_col"].get<std::string>();
    if (j.contains("episode_col") && !j["episode_col"].is_null()) m.episode_col = j["episode_col"].get<std::string>();
    m.source = j.value("source", std::string{});
    m.policy = j.value("policy", std::string{});
  } catch (const json::exception& e) {
    fail(ErrorKind::Schema, "manifest " + path.string() + ": " + e.what());
  }
  require(!m.state_cols.empty(), ErrorKind::Schema, "manifest declares no state_cols");
  return m;
}

void save_manifest(const Manifest& m, const std::filesystem::path& path) {
  json j;
  j["state_cols"] = m.state_cols;
  j["action_cols"] = m.action_cols;
  j["reward_col"] = m.reward_col ? json(*m.reward_col) : json(nullptr);
  j["episode_col"] = m.episode_col ? json(*m.episode_col) : json(nullptr);
  j["source"] = m.source;
  j["policy"] = m.policy;
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorKind::Io, "cannot write manifest " + path.string());
  out << j.dump(2) << '\n';
}

std::filesystem::path default_manifest_path(const std::filesystem::path& data_path) {
  auto p = data_path;
  p.replace_extension(".manifest.json");
  return p;
}

// ---------------------------------------------------------------------------
// loading

namespace {

struct ColumnPlan {
  std::vector<std::size_t> state_idx;
  std::vector<std::size_t> action_idx;
  std::optional<std::size_t> reward_idx;
  std::optional<std::size_t> episode_idx;
};

ColumnPlan plan_columns(const Manifest& m, const std::vector<std::string>& header) {
  std::map<std::string, std::size_t> pos;
  for (std::size_t i = 0; i < header.size(); ++i) pos[header[i]] = i;
  auto find = [&](const std::string& name) {
    auto it = pos.find(name);
    require(it != pos.end(), ErrorKind::Schema, "column '" + name + "' declared in manifest is missing");
    return it->second;
  };
  ColumnPlan plan;
  for (const auto& c : m.state_cols) plan.state_idx.push_back(find(c));
  for (const auto& c : m.action_cols) plan.action_idx.push_back(find(c));
  if (m.reward_col) plan.reward_idx = find(*m.reward_col);
  if (m.episode_col) plan.episode_idx = find(*m.episode_col);
  return plan;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return {};
  auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

double parse_number(const std::string& field, std::size_t line_no) {
  auto s = trim(field);
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
    // from_chars rejects "nan"/"inf" spellings on some libstdc++ builds; treat
    // them as numbers so the schema check reports the real problem.
    if (s == "nan" || s == "NaN" || s == "NAN") return std::nan("");
    if (s == "inf" || s == "Inf") return INFINITY;
    if (s == "-inf" || s == "-Inf") return -INFINITY;
    fail(ErrorKind::Parse, "line " + std::to_string(line_no) + ": cannot parse '" + s + "' as a number");
  }
  return v;
}

struct Row {
  std::vector<double> state, action;
  double reward = 0.0;
  std::string episode;
  std::size_t line = 0;
};

Dataset assemble(std::vector<Row> rows, const ColumnPlan& plan, const Manifest& m) {
  Dataset ds;
  ds.source = m.source;
  ds.policy = m.policy;
  std::unordered_set<std::string> closed;
  std::size_t i = 0;
  while (i < rows.size()) {
    std::size_t j = i;
    while (j < rows.size() && rows[j].episode == rows[i].episode) ++j;
    require(closed.insert(rows[i].episode).second, ErrorKind::Schema,
            "line " + std::to_string(rows[i].line) + ": episode '" + rows[i].episode + "' is not contiguous");
    const auto n = static_cast<Eigen::Index>(j - i);
    Trajectory t;
    t.states.resize(n, static_cast<Eigen::Index>(plan.state_idx.size()));
    if (!plan.action_idx.empty()) t.actions = MatrixXd(n, static_cast<Eigen::Index>(plan.action_idx.size()));
    if (plan.reward_idx) t.rewards = VectorXd(n);
    for (Eigen::Index r = 0; r < n; ++r) {
      const auto& row = rows[i + static_cast<std::size_t>(r)];
      for (std::size_t c = 0; c < row.state.size(); ++c) {
        require(std::isfinite(row.state[c]), ErrorKind::Schema,
                "line " + std::to_string(row.line) + ": non-finite value in column '" + m.state_cols[c] + "'");
        t.states(r, static_cast<Eigen::Index>(c)) = row.state[c];
      }
      for (std::size_t c = 0; c < row.action.size(); ++c) {
        require(std::isfinite(row.action[c]), ErrorKind::Schema,
                "line " + std::to_string(row.line) + ": non-finite value in column '" + m.action_cols[c] + "'");
        (*t.actions)(r, static_cast<Eigen::Index>(c)) = row.action[c];
      }
      if (t.rewards) {
        require(std::isfinite(row.reward), ErrorKind::Schema,
                "line " + std::to_string(row.line) + ": non-finite reward");
        (*t.rewards)(r) = row.reward;
      }
    }
    ds.trajectories.push_back(std::move(t));
    i = j;
  }
  require(!ds.trajectories.empty(), ErrorKind::Schema, "dataset has no rows");
  return ds;
}

}  // namespace

Dataset load_dataset(const std::filesystem::path& path, FileFormat format,
                     const std::optional<std::filesystem::path>& manifest_path) {
  const auto manifest = load_manifest(manifest_path.value_or(default_manifest_path(path)));
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::Io, "cannot open dataset " + path.string());

  std::vector<Row> rows;
  std::string line;
  std::size_t line_no = 0;

  if (format == FileFormat::Csv) {
    require(static_cast<bool>(std::getline(in, line)), ErrorKind::Parse, "empty CSV file");
    ++line_no;
    std::vector<std::string> header;
    for (auto& h : split_csv(line)) header.push_back(trim(h));
    const auto plan = plan_columns(manifest, header);
    while (std::getline(in, line)) {
      ++line_no;
      if (trim(line).empty()) continue;
      auto fields = split_csv(line);
      require(fields.size() == header.size(), ErrorKind::Parse,
              "line " + std::to_string(line_no) + ": expected " + std::to_string(header.size()) + " fields, got " +
                  std::to_string(fields.size()));
      Row row;
      row.line = line_no;
      for (auto idx : plan.state_idx) row.state.push_back(parse_number(fields[idx], line_no));
      for (auto idx : plan.action_idx) row.action.push_back(parse_number(fields[idx], line_no));
      if (plan.reward_idx) row.reward = parse_number(fields[*plan.reward_idx], line_no);
      if (plan.episode_idx) row.episode = trim(fields[*plan.episode_idx]);
      rows.push_back(std::move(row));
    }
    return assemble(std::move(rows), plan, manifest);
  }

  // JSONL: one object per line keyed by column name.
  ColumnPlan plan;
  for (std::size_t i = 0; i < manifest.state_cols.size(); ++i) plan.state_idx.push_back(i);
  for (std::size_t i = 0; i < manifest.action_cols.size(); ++i) plan.action_idx.push_back(i);
  if (manifest.reward_col) plan.reward_idx = 0;
  auto number = [&](const json& obj, const std::string& key) -> double {
    require(obj.contains(key), ErrorKind::Schema, "line " + std::to_string(line_no) + ": missing key '" + key + "'");
    const auto& v = obj[key];
    if (v.is_null()) return std::nan("");
    require(v.is_number(), ErrorKind::Parse, "line " + std::to_string(line_no) + ": '" + key + "' is not a number");
    return v.get<double>();
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::exception&) {
      fail(ErrorKind::Parse, "line " + std::to_string(line_no) + ": malformed JSON");
    }
    Row row;
    row.line = line_no;
    for (const auto& c : manifest.state_cols) row.state.push_back(number(obj, c));
    for (const auto& c : manifest.action_cols) row.action.push_back(number(obj, c));
    if (manifest.reward_col) row.reward = number(obj, *manifest.reward_col);
    if (manifest.episode_col) {
      require(obj.contains(*manifest.episode_col), ErrorKind::Schema,
              "line " + std::to_string(line_no) + ": missing episode column");
      const auto& e = obj[*manifest.episode_col];
      row.episode = e.is_string() ? e.get<std::string>() : e.dump();
    }
    rows.push_back(std::move(row));
  }
  return assemble(std::move(rows), plan, manifest);
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& csv_path) {
  require(!dataset.trajectories.empty(), ErrorKind::InvalidArgument, "cannot save an empty dataset");
  const auto& first = dataset.trajectories.front();
  Manifest m;
  m.source = dataset.source;
  m.policy = dataset.policy;
  for (Eigen::Index i = 0; i < first.state_dim(); ++i) m.state_cols.push_back("s" + std::to_string(i));
  for (Eigen::Index i = 0; i < first.action_dim(); ++i) m.action_cols.push_back("a" + std::to_string(i));
  if (first.rewards) m.reward_col = "r";
  m.episode_col = "episode";

  std::ofstream out(csv_path);
  require(static_cast<bool>(out), ErrorKind::Io, "cannot write " + csv_path.string());
  out << std::setprecision(17);
  bool head = true;
  for (const auto& c : m.state_cols) out << (head ? "" : ",") << c, head = false;
  for (const auto& c : m.action_cols) out << ',' << c;
  if (m.reward_col) out << ',' << *m.reward_col;
  out << ",episode\n";
  for (std::size_t e = 0; e < dataset.trajectories.size(); ++e) {
    const auto& t = dataset.trajectories[e];
    for (Eigen::Index r = 0; r < t.length(); ++r) {
      for (Eigen::Index c = 0; c < t.state_dim(); ++c) out << (c ? "," : "") << t.states(r, c);
      for (Eigen::Index c = 0; c < t.action_dim(); ++c) out << ',' << (*t.actions)(r, c);
      if (t.rewards) out << ',' << (*t.rewards)(r);
      out << ',' << e << '\n';
    }
  }
  save_manifest(m, default_manifest_path(csv_path));
}

MatrixXd features(const Trajectory& t, Block block) {
  switch (block) {
    case Block::States:
      return t.states;
    case Block::Actions:
      require(t.actions.has_value(), ErrorKind::InvalidArgument, "trajectory has no actions");
      return *t.actions;
    case Block::Rewards:
      require(t.rewards.has_value(), ErrorKind::InvalidArgument, "trajectory has no rewards");
      return MatrixXd(*t.rewards);
    case Block::StatesActions: {
      MatrixXd out(t.length(), t.state_dim() + t.action_dim());
      out.leftCols(t.state_dim()) = t.states;
      if (t.actions) out.rightCols(t.action_dim()) = *t.actions;
      return out;
    }
  }
  return {};
}

MatrixXd stack(const Dataset& dataset, Block block) {
  require(!dataset.trajectories.empty(), ErrorKind::InvalidArgument, "empty dataset");
  const auto rows = static_cast<Eigen::Index>(dataset.total_steps());
  MatrixXd first = features(dataset.trajectories.front(), block);
  MatrixXd out(rows, first.cols());
  Eigen::Index r = 0;
  for (const auto& t : dataset.trajectories) {
    MatrixXd f = features(t, block);
    require(f.cols() == out.cols(), ErrorKind::Schema, "trajectories disagree on dimensions");
    out.middleRows(r, f.rows()) = f;
    r += f.rows();
  }
  return out;
}

// ---------------------------------------------------------------------------
// scaler

ScalerPipeline ScalerPipeline::fit(const MatrixXd& data) {
  require(data.rows() >= 2, ErrorKind::InvalidArgument, "scaler needs at least 2 samples");
  require(data.allFinite(), ErrorKind::InvalidArgument, "scaler input has non-finite values");
  ScalerPipeline s;
  const auto d = data.cols();
  s.min_ = data.colwise().minCoeff().transpose();
  s.max_ = data.colwise().maxCoeff().transpose();
  s.range_ = s.max_ - s.min_;
  s.mean_.resize(d);
  s.std_.resize(d);
  s.constant_.assign(static_cast<std::size_t>(d), false);
  for (Eigen::Index j = 0; j < d; ++j) {
    if (!(s.range_(j) > 0.0)) {
      s.range_(j) = 1.0;
      s.constant_[static_cast<std::size_t>(j)] = true;
    }
    const VectorXd u = (data.col(j).array() - s.min_(j)) / s.range_(j);
    const double mu = u.mean();
    const double sd = std::sqrt((u.array() - mu).square().mean());
    if (s.constant_[static_cast<std::size_t>(j)] || !(sd > 0.0)) {
      s.constant_[static_cast<std::size_t>(j)] = true;
      s.mean_(j) = 0.0;
      s.std_(j) = 1.0;
    } else {
      s.mean_(j) = mu;
      s.std_(j) = sd;
    }
  }
  return s;
}

ScalerPipeline ScalerPipeline::identity(Eigen::Index dims) {
  ScalerPipeline s;
  s.min_ = VectorXd::Zero(dims);
  s.max_ = VectorXd::Ones(dims);
  s.range_ = VectorXd::Ones(dims);
  s.mean_ = VectorXd::Zero(dims);
  s.std_ = VectorXd::Ones(dims);
  s.constant_.assign(static_cast<std::size_t>(dims), false);
  return s;
}

MatrixXd ScalerPipeline::transform(const MatrixXd& x) const {
  require(x.cols() == dims(), ErrorKind::InvalidArgument,
          "scaler fitted on " + std::to_string(dims()) + " dims, got " + std::to_string(x.cols()));
  MatrixXd out(x.rows(), x.cols());
  for (Eigen::Index j = 0; j < x.cols(); ++j)
    out.col(j) = (((x.col(j).array() - min_(j)) / range_(j)) - mean_(j)) / std_(j);
  return out;
}

MatrixXd ScalerPipeline::inverse(const MatrixXd& z) const {
  require(z.cols() == dims(), ErrorKind::InvalidArgument,
          "scaler fitted on " + std::to_string(dims()) + " dims, got " + std::to_string(z.cols()));
  MatrixXd out(z.rows(), z.cols());
  for (Eigen::Index j = 0; j < z.cols(); ++j)
    out.col(j) = ((z.col(j).array() * std_(j)) + mean_(j)) * range_(j) + min_(j);
  return out;
}

ScalerPipeline fit_scaler(const Dataset& dataset, Block block) { return ScalerPipeline::fit(stack(dataset, block)); }

}  // namespace dicl::trajdata
