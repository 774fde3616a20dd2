#include "attrgen/trainer.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "attrgen/errors.hpp"

namespace attrgen {

namespace {

std::string trim(std::string s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

std::string fmt_list(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + fmt(v[i]);
  return s;
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::logic_error&) {
    throw ConfigError("config: '" + key + "' expects a number, got '" + v + "'");
  }
}

long to_long(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    long d = std::stol(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::logic_error&) {
    throw ConfigError("config: '" + key + "' expects an integer, got '" + v + "'");
  }
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true") return true;
  if (v == "0" || v == "false") return false;
  throw ConfigError("config: '" + key + "' expects true or false, got '" + v + "'");
}

std::vector<double> to_list(const std::string& key, const std::string& v) {
  std::vector<double> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(to_double(key, trim(item)));
  return out;
}

}  // namespace

void TrainConfig::set(const std::string& key, const std::string& value) {
  const std::string& v = value;
  if (key == "loss") loss = parse_loss_config(v);
  else if (key == "gamma") gamma = to_double(key, v);
  else if (key == "lambda") lambda = to_double(key, v);
  else if (key == "gamma_grid") gamma_grid = to_list(key, v);
  else if (key == "lambda_grid") lambda_grid = to_list(key, v);
  else if (key == "d_emb") d_emb = static_cast<int>(to_long(key, v));
  else if (key == "d_enc") d_enc = static_cast<int>(to_long(key, v));
  else if (key == "d_dec") d_dec = static_cast<int>(to_long(key, v));
  else if (key == "d_attr") d_attr = static_cast<int>(to_long(key, v));
  else if (key == "d_disc") d_disc = static_cast<int>(to_long(key, v));
  else if (key == "bidirectional_encoder") bidirectional_encoder = to_bool(key, v);
  else if (key == "precision") precision = v;
  else if (key == "lr") lr = to_double(key, v);
  else if (key == "lr_d") lr_d = to_double(key, v);
  else if (key == "beta1") beta1 = to_double(key, v);
  else if (key == "beta2") beta2 = to_double(key, v);
  else if (key == "adam_eps") adam_eps = to_double(key, v);
  else if (key == "clip") clip = to_double(key, v);
  else if (key == "batch_size") batch_size = static_cast<int>(to_long(key, v));
  else if (key == "max_steps") max_steps = to_long(key, v);
  else if (key == "valid_interval") valid_interval = to_long(key, v);
  else if (key == "warmup_steps") warmup_steps = to_long(key, v);
  else if (key == "sampling") {
    if (v == "hard") sampling = Sampling::hard;
    else if (v == "soft") sampling = Sampling::soft;
    else throw ConfigError("config: sampling must be hard or soft, got '" + v + "'");
  } else if (key == "sample_mode") {
    if (v == "greedy") sample_mode = SampleMode::greedy;
    else if (v == "multinomial") sample_mode = SampleMode::multinomial;
    else throw ConfigError("config: sample_mode must be greedy or multinomial, got '" + v + "'");
  } else if (key == "temperature_init") temperature_init = to_double(key, v);
  else if (key == "temperature_floor") temperature_floor = to_double(key, v);
  else if (key == "temperature_decay") temperature_decay = to_double(key, v);
  else if (key == "selection_tolerance") selection_tolerance = to_double(key, v);
  else if (key == "max_len") max_len = static_cast<int>(to_long(key, v));
  else if (key == "valid_samples") valid_samples = static_cast<int>(to_long(key, v));
  else if (key == "ignore_labels") ignore_labels = to_bool(key, v);
  else if (key == "seed") {
    long s = to_long(key, v);
    if (s < 0) throw ConfigError("config: seed must be non-negative");
    seed = static_cast<std::uint64_t>(s);
  } else {
    throw ConfigError("config: unknown key '" + key + "'");
  }
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("config: " + m); };
  if (gamma_grid.empty() || lambda_grid.empty()) fail("grids must be nonempty");
  for (double g : gamma_grid) {
    if (!(g >= 0 && g <= 1)) fail("gamma_grid values must lie in [0, 1]");
  }
  for (double l : lambda_grid) {
    if (!(l > 0)) fail("lambda_grid values must be > 0");
  }
  if (!(gamma >= 0 && gamma <= 1)) fail("gamma must lie in [0, 1]");
  if (!(lambda > 0)) fail("lambda must be > 0");
  if (d_emb <= 0 || d_enc <= 0 || d_dec <= 0 || d_attr <= 0 || d_disc <= 0) fail("layer sizes must be positive");
  if (bidirectional_encoder && d_enc % 2) fail("bidirectional encoder needs an even d_enc");
  if (precision != "f64" && precision != "f32") fail("precision must be f64 or f32");
  if (!(lr > 0) || !(lr_d > 0)) fail("learning rates must be > 0");
  if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1)) fail("Adam betas must lie in [0, 1)");
  if (!(adam_eps > 0)) fail("adam_eps must be > 0");
  if (!(clip > 0)) fail("clip must be > 0");
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (max_steps < 0) fail("max_steps must be >= 0");
  if (valid_interval < 1) fail("valid_interval must be >= 1");
  if (warmup_steps < 0) fail("warmup_steps must be >= 0");
  if (!(temperature_decay > 0 && temperature_decay < 1)) fail("temperature_decay must lie in (0, 1)");
  if (!(temperature_init > 0) || !(temperature_floor > 0)) fail("temperatures must be > 0");
  if (!(selection_tolerance >= 0)) fail("selection_tolerance must be >= 0");
  if (max_len < 0) fail("max_len must be >= 0");
  if (valid_samples < 0) fail("valid_samples must be >= 0");
}

std::string TrainConfig::to_string() const {
  std::ostringstream os;
  os << "loss = " << attrgen::to_string(loss) << "\n"
     << "gamma = " << fmt(gamma) << "\n"
     << "lambda = " << fmt(lambda) << "\n"
     << "gamma_grid = " << fmt_list(gamma_grid) << "\n"
     << "lambda_grid = " << fmt_list(lambda_grid) << "\n"
     << "d_emb = " << d_emb << "\n"
     << "d_enc = " << d_enc << "\n"
     << "d_dec = " << d_dec << "\n"
     << "d_attr = " << d_attr << "\n"
     << "d_disc = " << d_disc << "\n"
     << "bidirectional_encoder = " << (bidirectional_encoder ? "true" : "false") << "\n"
     << "precision = " << precision << "\n"
     << "lr = " << fmt(lr) << "\n"
     << "lr_d = " << fmt(lr_d) << "\n"
     << "beta1 = " << fmt(beta1) << "\n"
     << "beta2 = " << fmt(beta2) << "\n"
     << "adam_eps = " << fmt(adam_eps) << "\n"
     << "clip = " << fmt(clip) << "\n"
     << "batch_size = " << batch_size << "\n"
     << "max_steps = " << max_steps << "\n"
     << "valid_interval = " << valid_interval << "\n"
     << "warmup_steps = " << warmup_steps << "\n"
     << "sampling = " << (sampling == Sampling::hard ? "hard" : "soft") << "\n"
     << "sample_mode = " << (sample_mode == SampleMode::greedy ? "greedy" : "multinomial") << "\n"
     << "temperature_init = " << fmt(temperature_init) << "\n"
     << "temperature_floor = " << fmt(temperature_floor) << "\n"
     << "temperature_decay = " << fmt(temperature_decay) << "\n"
     << "selection_tolerance = " << fmt(selection_tolerance) << "\n"
     << "max_len = " << max_len << "\n"
     << "valid_samples = " << valid_samples << "\n"
     << "ignore_labels = " << (ignore_labels ? "true" : "false") << "\n"
     << "seed = " << seed << "\n";
  return os.str();
}

std::uint64_t TrainConfig::digest() const { return fnv1a64(to_string()); }

TrainConfig TrainConfig::parse(std::string_view text, const std::string& source) {
  TrainConfig c;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t no = 0;
  while (std::getline(in, line)) {
    ++no;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(source + ":" + std::to_string(no) + ": expected key = value");
    try {
      c.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(source + ":" + std::to_string(no) + ": " + e.what());
    }
  }
  c.validate();
  return c;
}

TrainConfig TrainConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.string());
}

ModelConfig TrainConfig::model_config(int vocab_size, int attr_width) const {
  ModelConfig m;
  m.vocab_size = vocab_size;
  m.attr_width = attr_width;
  m.d_emb = d_emb;
  m.d_enc = d_enc;
  m.d_dec = d_dec;
  m.d_attr = d_attr;
  m.d_disc = d_disc;
  m.bidirectional_encoder = bidirectional_encoder;
  m.validate();
  return m;
}

double anneal_temperature(long step, double decay, double init, double floor) {
  if (!(decay > 0 && decay < 1)) throw ConfigError("temperature decay must lie in (0, 1)");
  if (step < 0) throw ContractError("anneal_temperature: step must be >= 0");
  return std::max(floor, init * std::pow(decay, static_cast<double>(step)));
}

std::string history_csv(const std::vector<ValidationRecord>& history) {
  std::ostringstream os;
  os << kHistoryHeader << "\n" << std::setprecision(10);
  for (const auto& r : history) {
    os << r.step << ',' << r.content_bleu << ',' << r.attribute_accuracy << ',' << r.recon_loss << ','
       << r.adv_d << ',' << r.adv_g << '\n';
  }
  return os.str();
}

void write_history(const std::filesystem::path& path, const std::vector<ValidationRecord>& history) {
  std::ofstream os(path);
  if (!os) throw InputError("cannot write " + path.string());
  os << history_csv(history);
}

int select_record(const std::vector<ValidationRecord>& history, double tolerance) {
  int best = -1;
  double running_min = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < history.size(); ++i) {
    const auto& r = history[i];
    running_min = std::min(running_min, r.recon_loss);
    if (r.recon_loss > (1.0 + tolerance) * running_min) continue;
    const ValidationRecord* b = best < 0 ? nullptr : &history[static_cast<std::size_t>(best)];
    if (!b || r.attribute_accuracy > b->attribute_accuracy ||
        (r.attribute_accuracy == b->attribute_accuracy && r.recon_loss < b->recon_loss)) {
      best = static_cast<int>(i);
    }
  }
  return best;
}

LabeledCorpus head(const LabeledCorpus& c, int n) {
  if (n <= 0 || static_cast<std::size_t>(n) >= c.size()) return c;
  LabeledCorpus out;
  out.schema = c.schema;
  out.split = c.split;
  out.examples.assign(c.examples.begin(), c.examples.begin() + n);
  return out;
}

}  // namespace attrgen
