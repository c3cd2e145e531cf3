#include "shade/config.hpp"

#include <fstream>
#include <sstream>

#include "shade/errors.hpp"
#include "shade/tensor_io.hpp"

namespace shade {

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "on" || v == "true" || v == "1") return true;
  if (v == "off" || v == "false" || v == "0") return false;
  throw ConfigError(key + ": expected on/off, got '" + v + "'");
}

template <typename T>
T parse_num(const std::string& key, const std::string& v) {
  std::istringstream is(v);
  T out;
  is >> out;
  if (is.fail() || !is.eof()) throw ConfigError(key + ": cannot parse number '" + v + "'");
  return out;
}

}  // namespace

std::string rc_teacher_to_string(RcTeacher t) {
  return t == RcTeacher::Frozen ? "frozen" : "ema";
}

std::string basis_method_to_string(BasisMethod m) {
  return m == BasisMethod::FPS ? "fps" : "kmeans";
}

void apply_override(TrainConfig& cfg, const std::string& key, const std::string& value) {
  const std::string v = trim(value);
  if (key == "seed") cfg.seed = parse_num<uint64_t>(key, v);
  else if (key == "iterations") cfg.iterations = parse_num<int64_t>(key, v);
  else if (key == "batch") cfg.batch = parse_num<int>(key, v);
  else if (key == "lr") cfg.lr = parse_num<float>(key, v);
  else if (key == "momentum") cfg.momentum = parse_num<float>(key, v);
  else if (key == "weight_decay") cfg.weight_decay = parse_num<float>(key, v);
  else if (key == "poly_power") cfg.poly_power = parse_num<float>(key, v);
  else if (key == "lambda_sc") cfg.lambda_sc = parse_num<double>(key, v);
  else if (key == "lambda_rc") cfg.lambda_rc = parse_num<double>(key, v);
  else if (key == "k") {
    if (v == "once") cfg.reselect_k = std::nullopt;
    else cfg.reselect_k = parse_num<int64_t>(key, v);
  } else if (key == "shm_location") {
    std::string loc = v;
    if (!loc.empty() && (loc[0] == 'L' || loc[0] == 'l')) loc = loc.substr(1);
    cfg.shm_location = parse_num<int>(key, loc);
    if (cfg.shm_location < 0 || cfg.shm_location > 3)
      throw ConfigError("shm_location must be in L0..L3");
  } else if (key == "strategy") cfg.strategy = strategy_from_string(v);
  else if (key == "basis_method") {
    if (v == "fps") cfg.basis_method = BasisMethod::FPS;
    else if (v == "kmeans") cfg.basis_method = BasisMethod::Kmeans;
    else throw ConfigError("basis_method: expected fps or kmeans, got '" + v + "'");
  } else if (key == "sc") cfg.sc_on = parse_bool(key, v);
  else if (key == "rc") cfg.rc_on = parse_bool(key, v);
  else if (key == "rc_teacher") {
    if (v == "frozen") cfg.rc_teacher = RcTeacher::Frozen;
    else if (v == "ema") cfg.rc_teacher = RcTeacher::Ema;
    else throw ConfigError("rc_teacher: expected frozen or ema, got '" + v + "'");
  } else if (key == "ema_momentum") cfg.ema_momentum = parse_num<float>(key, v);
  else if (key == "mix_concentration") cfg.mix_concentration = parse_num<float>(key, v);
  else if (key == "collect_max") cfg.collect_max = parse_num<int64_t>(key, v);
  else if (key == "num_classes") cfg.num_classes = parse_num<int>(key, v);
  else if (key == "source_domains") cfg.source_domains = split_list(v);
  else if (key == "target_domains") cfg.target_domains = split_list(v);
  else if (key == "data_dir") cfg.data_dir = v;
  else if (key == "retro_path") cfg.retro_path = v;
  else if (key == "out_dir") cfg.out_dir = v;
  else if (key == "eval_every") cfg.eval_every = parse_num<int64_t>(key, v);
  else if (key.rfind("data_digest.", 0) == 0) cfg.data_digests[key.substr(12)] = v;
  else throw ConfigError("unknown config key '" + key + "'");
}

TrainConfig parse_config(const std::string& text) {
  TrainConfig cfg;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key=value");
    apply_override(cfg, trim(line.substr(0, eq)), line.substr(eq + 1));
  }
  return cfg;
}

TrainConfig load_config(const std::string& path, const std::vector<std::string>& overrides) {
  TrainConfig cfg;
  if (!path.empty()) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config file " + path);
    std::stringstream buf;
    buf << is.rdbuf();
    cfg = parse_config(buf.str());
  }
  for (const auto& ov : overrides) {
    auto eq = ov.find('=');
    if (eq == std::string::npos) throw ConfigError("override '" + ov + "': expected key=value");
    apply_override(cfg, trim(ov.substr(0, eq)), ov.substr(eq + 1));
  }
  cfg.validate();
  return cfg;
}

void TrainConfig::validate() const {
  if (iterations < 1) throw ConfigError("iterations must be >= 1");
  if (batch < 1) throw ConfigError("batch must be >= 1");
  if (lambda_sc < 0 || lambda_rc < 0) throw ConfigError("loss weights must be >= 0");
  if (reselect_k.has_value() && *reselect_k < 1)
    throw ConfigError("k must be >= 1 or 'once'");
  if (shm_location < 0 || shm_location > 3)
    throw ConfigError("shm_location must be in L0..L3");
  if (batch < 2 &&
      (strategy == StrategyKind::MixStyle || strategy == StrategyKind::CrossNorm))
    throw ConfigError("mixstyle/crossnorm need batch >= 2");
  if (num_classes < 2) throw ConfigError("num_classes must be >= 2");
  if (source_domains.empty()) throw ConfigError("at least one source domain required");
  if (target_domains.empty()) throw ConfigError("at least one target domain required");
  if (lr <= 0) throw ConfigError("lr must be > 0");
  if (ema_momentum < 0 || ema_momentum > 1) throw ConfigError("ema_momentum must be in [0,1]");
  if (collect_max < 1) throw ConfigError("collect_max must be >= 1");
}

std::string TrainConfig::serialize() const {
  std::ostringstream os;
  os.precision(9);
  os << "seed=" << seed << "\n";
  os << "iterations=" << iterations << "\n";
  os << "batch=" << batch << "\n";
  os << "lr=" << lr << "\n";
  os << "momentum=" << momentum << "\n";
  os << "weight_decay=" << weight_decay << "\n";
  os << "poly_power=" << poly_power << "\n";
  os << "lambda_sc=" << lambda_sc << "\n";
  os << "lambda_rc=" << lambda_rc << "\n";
  os << "k=" << (reselect_k ? std::to_string(*reselect_k) : std::string("once")) << "\n";
  os << "shm_location=L" << shm_location << "\n";
  os << "strategy=" << strategy_to_string(strategy) << "\n";
  os << "basis_method=" << basis_method_to_string(basis_method) << "\n";
  os << "sc=" << (sc_on ? "on" : "off") << "\n";
  os << "rc=" << (rc_on ? "on" : "off") << "\n";
  os << "rc_teacher=" << rc_teacher_to_string(rc_teacher) << "\n";
  os << "ema_momentum=" << ema_momentum << "\n";
  os << "mix_concentration=" << mix_concentration << "\n";
  os << "collect_max=" << collect_max << "\n";
  os << "num_classes=" << num_classes << "\n";
  auto join = [](const std::vector<std::string>& v) {
    std::string s;
    for (size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + v[i];
    return s;
  };
  os << "source_domains=" << join(source_domains) << "\n";
  os << "target_domains=" << join(target_domains) << "\n";
  os << "data_dir=" << data_dir << "\n";
  os << "retro_path=" << retro_path << "\n";
  os << "out_dir=" << out_dir << "\n";
  os << "eval_every=" << eval_every << "\n";
  for (const auto& [domain, digest] : data_digests)
    os << "data_digest." << domain << "=" << digest << "\n";
  return os.str();
}

std::string TrainConfig::digest() const {
  // Filesystem locations are excluded so the same experiment run from a
  // different directory layout keeps the same identity.
  std::istringstream is(serialize());
  std::string line, s;
  while (std::getline(is, line)) {
    if (line.rfind("data_dir=", 0) == 0 || line.rfind("retro_path=", 0) == 0 ||
        line.rfind("out_dir=", 0) == 0)
      continue;
    s += line;
    s += '\n';
  }
  return digest_hex(fnv1a64(s.data(), s.size()));
}

}  // namespace shade
