#include "curricubench/manifest.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace curricubench::cli {

namespace {

std::string strip(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

class Section {
 public:
  Section(const ManifestSections& sections, const std::string& name)
      : name_(name) {
    const auto it = sections.find(name);
    if (it != sections.end()) kv_ = &it->second;
  }

  bool present() const { return kv_ != nullptr; }
  bool has(const std::string& key) const { return kv_ && kv_->count(key); }

  std::string str(const std::string& key, const std::string& fallback = "") const {
    if (!has(key)) return fallback;
    return kv_->at(key);
  }
  std::string required(const std::string& key) const {
    require(has(key), Errc::Validation,
            "manifest section [" + name_ + "] is missing key '" + key + "'");
    return kv_->at(key);
  }
  double num(const std::string& key, double fallback) const {
    if (!has(key)) return fallback;
    try {
      return std::stod(kv_->at(key));
    } catch (const std::exception&) {
      throw_error(Errc::Validation, "manifest key " + name_ + "." + key +
                                        " is not a number: " + kv_->at(key));
    }
  }
  std::uint64_t uint(const std::string& key, std::uint64_t fallback) const {
    return static_cast<std::uint64_t>(num(key, static_cast<double>(fallback)));
  }
  bool flag(const std::string& key, bool fallback) const {
    if (!has(key)) return fallback;
    const std::string v = kv_->at(key);
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw_error(Errc::Validation, "manifest key " + name_ + "." + key +
                                      " must be boolean, got: " + v);
  }
  std::vector<std::string> list(const std::string& key) const {
    std::vector<std::string> out;
    if (!has(key)) return out;
    std::istringstream in(kv_->at(key));
    std::string tok;
    while (std::getline(in, tok, ',')) {
      const std::string t = strip(tok);
      if (!t.empty()) out.push_back(t);
    }
    return out;
  }
  std::vector<double> numbers(const std::string& key) const {
    std::vector<double> out;
    for (const auto& tok : list(key)) out.push_back(std::stod(tok));
    return out;
  }
  const std::map<std::string, std::string>* raw() const { return kv_; }

 private:
  std::string name_;
  const std::map<std::string, std::string>* kv_ = nullptr;
};

const std::vector<std::string> kKnownTasks = {"rotation", "relloc", "moco", "swav",
                                              "classification"};

}  // namespace

ManifestSections parse_manifest_text(const std::string& text) {
  ManifestSections out;
  std::string section;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    const std::string row = strip(line);
    if (row.empty()) continue;
    if (row.front() == '[') {
      require(row.back() == ']', Errc::Validation,
              "manifest line " + std::to_string(line_no) + ": unterminated section header");
      section = strip(row.substr(1, row.size() - 2));
      out[section];
      continue;
    }
    const std::size_t eq = row.find('=');
    require(eq != std::string::npos, Errc::Validation,
            "manifest line " + std::to_string(line_no) + ": expected key = value");
    const std::string key = strip(row.substr(0, eq));
    require(!key.empty(), Errc::Validation,
            "manifest line " + std::to_string(line_no) + ": empty key");
    out[section][key] = strip(row.substr(eq + 1));
  }
  return out;
}

ManifestSections load_manifest(const std::filesystem::path& file) {
  std::ifstream in(file);
  require(in.good(), Errc::Io, "cannot open manifest " + file.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_manifest_text(buf.str());
}

curriculum::StepSpec profile_step_defaults(const std::string& task,
                                           const std::string& profile) {
  require(std::find(kKnownTasks.begin(), kKnownTasks.end(), task) != kKnownTasks.end(),
          Errc::Task, "unknown task '" + task + "'");
  require(profile == "desk" || profile == "paper", Errc::Validation,
          "profile must be desk or paper");
  curriculum::StepSpec step;
  step.task = task;
  step.lr_candidates = {0.01, 0.025, 0.05, 0.1, 0.25};
  const bool paper = profile == "paper";
  if (task == "classification") {
    step.batch_size = 64;
    step.search_epochs = paper ? 80 : 5;
    step.full_epochs = paper ? 150 : 25;
  } else {
    step.batch_size = task == "relloc" || task == "moco" ? 32
                      : task == "rotation"               ? 16
                                                         : 8;  // swav
    step.search_epochs = paper ? 20 : 3;
    step.full_epochs = paper ? 30 : 10;
  }
  step.optimizer =
      task == "swav" ? nn::OptimConfig::Kind::Lars : nn::OptimConfig::Kind::Sgd;
  step.sgd_momentum = 0.9;
  step.weight_decay = 1e-4;
  return step;
}

ExperimentManifest resolve_manifest(const ManifestSections& sections) {
  ExperimentManifest m;
  const Section root(sections, "");
  m.name = root.required("name");
  require(!m.name.empty(), Errc::Validation, "manifest name must be non-empty");
  m.profile = root.str("profile", "desk");
  m.global_seed = root.uint("global_seed", 0);
  if (const char* env = std::getenv("CURRICUBENCH_SEED"); env && *env)
    m.global_seed = std::stoull(env);
  m.output_dir = root.str("output_dir", "runs/" + m.name);
  m.jobs = static_cast<std::size_t>(root.uint("jobs", 1));

  const Rng seed_root(m.global_seed);

  const Section ds(sections, "dataset");
  m.dataset.kind = ds.str("kind", "phantom");
  require(m.dataset.kind == "phantom" || m.dataset.kind == "directory", Errc::Validation,
          "dataset.kind must be phantom or directory");
  m.dataset.side = static_cast<std::size_t>(ds.uint("side", 64));
  m.dataset.split_fraction = ds.num("split_fraction", 0.8);
  const std::string mode_s = ds.str("class_mode", "two_class");
  require(mode_s == "two_class" || mode_s == "four_class", Errc::Validation,
          "dataset.class_mode must be two_class or four_class");
  m.dataset.class_mode =
      mode_s == "two_class" ? data::ClassMode::TwoClass : data::ClassMode::FourClass;
  if (m.dataset.kind == "phantom") {
    m.dataset.phantom.n_samples = static_cast<std::size_t>(ds.uint("n_samples", 400));
    m.dataset.phantom.side = m.dataset.side;
    m.dataset.phantom.noise_sigma = ds.num("noise_sigma", 6.0);
    m.dataset.phantom.seed = ds.uint("seed", seed_root.fork("data.gen").next_u64());
    const std::string pm = ds.str("mode", "signal_in_lung");
    if (pm == "signal_in_lung") m.dataset.phantom.mode = data::PhantomMode::SignalInLung;
    else if (pm == "signal_out_lung") m.dataset.phantom.mode = data::PhantomMode::SignalOutLung;
    else if (pm == "mixed") m.dataset.phantom.mode = data::PhantomMode::Mixed;
    else throw_error(Errc::Validation, "unknown phantom mode " + pm);
  } else {
    m.dataset.path = ds.required("path");
    m.dataset.masks_path = ds.str("masks", "");
  }

  const Section bb(sections, "backbone");
  m.backbone.in_channels = static_cast<std::size_t>(bb.uint("in_channels", 1));
  if (bb.has("stage_widths")) {
    m.backbone.stage_widths.clear();
    for (const double v : bb.numbers("stage_widths"))
      m.backbone.stage_widths.push_back(static_cast<std::size_t>(v));
  }
  m.backbone.blocks_per_stage = static_cast<std::size_t>(bb.uint("blocks_per_stage", 1));

  const Section att(sections, "attention");
  m.attention.cam.clamp_negative = att.flag("cam_clamp", true);
  m.attention.postprocess.min_area_fraction = att.num("min_area_fraction", 0.01);
  m.attention.postprocess.closing_radius =
      static_cast<std::size_t>(att.uint("closing_radius", 2));
  m.attention.postprocess_masks =
      att.flag("postprocess_masks", m.dataset.kind == "directory");

  const Section cur(sections, "curriculum");
  m.pretrain = cur.list("pretrain");
  for (const auto& task : m.pretrain)
    require(task != "classification" &&
                std::find(kKnownTasks.begin(), kKnownTasks.end(), task) != kKnownTasks.end(),
            Errc::Task, "invalid pretraining task '" + task + "'");
  const std::string init_s = cur.str("init", "scratch");
  if (init_s == "scratch") {
    m.init = curriculum::CurriculumSpec::Init::Scratch;
  } else if (init_s.rfind("checkpoint:", 0) == 0) {
    m.init = curriculum::CurriculumSpec::Init::ExternalCheckpoint;
    m.init_path = init_s.substr(std::string("checkpoint:").size());
  } else {
    throw_error(Errc::Validation, "curriculum.init must be scratch or checkpoint:<path>");
  }

  const Section task_moco(sections, "task.moco");
  m.moco.temperature = task_moco.num("temperature", 0.2);
  m.moco.queue_capacity = static_cast<std::size_t>(task_moco.uint("queue_capacity", 256));
  m.moco.encoder_momentum = task_moco.num("encoder_momentum", 0.99);
  m.moco.proj_dim = static_cast<std::size_t>(task_moco.uint("proj_dim", 32));

  const Section task_swav(sections, "task.swav");
  m.swav.prototypes = static_cast<std::size_t>(task_swav.uint("prototypes", 32));
  m.swav.epsilon = task_swav.num("epsilon", 0.05);
  m.swav.sinkhorn_iters = static_cast<std::size_t>(task_swav.uint("sinkhorn_iters", 3));
  m.swav.temperature = task_swav.num("temperature", 0.1);
  m.swav.proj_dim = static_cast<std::size_t>(task_swav.uint("proj_dim", 32));

  const Section task_relloc(sections, "task.relloc");
  m.relloc.gap = static_cast<std::size_t>(task_relloc.uint("gap", 2));
  m.relloc.jitter = static_cast<std::size_t>(task_relloc.uint("jitter", 1));

  // Per-step specs: profile defaults overridden by [step.<task>] keys.
  std::size_t step_index = 0;
  const auto build_step = [&](const std::string& task) {
    curriculum::StepSpec step = profile_step_defaults(task, m.profile);
    const Section s(sections, "step." + task);
    step.batch_size = static_cast<std::size_t>(s.uint("batch_size", step.batch_size));
    if (s.has("lr_candidates")) step.lr_candidates = s.numbers("lr_candidates");
    step.search_epochs = static_cast<std::size_t>(s.uint("search_epochs", step.search_epochs));
    step.full_epochs = static_cast<std::size_t>(s.uint("full_epochs", step.full_epochs));
    if (s.has("optimizer")) {
      const std::string o = s.str("optimizer");
      require(o == "sgd" || o == "lars", Errc::Validation, "optimizer must be sgd or lars");
      step.optimizer =
          o == "lars" ? nn::OptimConfig::Kind::Lars : nn::OptimConfig::Kind::Sgd;
    }
    step.sgd_momentum = s.num("momentum", step.sgd_momentum);
    step.weight_decay = s.num("weight_decay", step.weight_decay);
    step.trust_coeff = s.num("trust_coeff", step.trust_coeff);
    if (s.has("criterion")) {
      const std::string c = s.str("criterion");
      if (c == "max_performance")
        step.criterion = curriculum::SearchCriterion::MaxTaskPerformance;
      else if (c == "min_loss")
        step.criterion = curriculum::SearchCriterion::MinLoss;
      else
        throw_error(Errc::Validation, "criterion must be max_performance or min_loss");
    }
    step.seed =
        s.uint("seed", seed_root.fork("curriculum.step." + task, step_index).next_u64());
    ++step_index;
    return step;
  };
  for (const auto& task : m.pretrain) m.steps.emplace(task, build_step(task));
  m.steps.emplace("classification", build_step("classification"));

  const Section acc(sections, "single_task_acc");
  if (acc.raw())
    for (const auto& [task, value] : *acc.raw()) m.single_task_acc[task] = std::stod(value);

  return m;
}

ExperimentManifest load_experiment_manifest(const std::filesystem::path& file) {
  return resolve_manifest(load_manifest(file));
}

}  // namespace curricubench::cli
