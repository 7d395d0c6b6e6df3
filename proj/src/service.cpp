#include "crosstraj/service.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <sstream>

#include <httplib.h>

#include "crosstraj/error.hpp"
#include "crosstraj/gnn.hpp"
#include "crosstraj/pipeline.hpp"

namespace crosstraj::service {

namespace files = pipeline::files;

namespace {

std::string now_iso() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// Artifacts of each stage, dropped when an earlier stage is re-run.
const std::vector<std::string> kTrainFiles = {files::kSplit, files::kModel, files::kTrainReport};
const std::vector<std::string> kPredictFiles = {files::kPredict, files::kPredicted, files::kPaths,
                                                files::kSelections, files::kEnrichDir};
const std::vector<std::string> kSummaryFiles = {files::kSummary};

void remove_all(const fs::path& dir, const std::vector<std::string>& names) {
  for (const auto& n : names) fs::remove_all(dir / n);
}

// Moves every entry of `from` into `to`, replacing files of the same name.
void move_tree(const fs::path& from, const fs::path& to) {
  fs::create_directories(to);
  for (const auto& e : fs::directory_iterator(from)) {
    const fs::path dst = to / e.path().filename();
    if (e.is_directory()) {
      move_tree(e.path(), dst);
    } else {
      fs::rename(e.path(), dst);
    }
  }
}

std::uint64_t id_number(const std::string& id) {
  if (id.size() < 2) return 0;
  try {
    return std::stoull(id.substr(1));
  } catch (const std::exception&) {
    return 0;
  }
}

const char* stage_of(JobKind k) {
  switch (k) {
    case JobKind::Train: return "ingest";
    case JobKind::Predict: return "train";
    case JobKind::Summarize: return "predict";
    case JobKind::Enrich: return "predict";
  }
  return "";
}

pipeline::TrainOptions train_options(const json& params) {
  pipeline::TrainOptions opts;
  if (params.contains("config")) opts.config = gnn::config_from_json(params.at("config"));
  if (params.contains("seed")) opts.config.seed = params.at("seed").get<std::uint64_t>();
  if (params.contains("epochs")) opts.config.epochs = params.at("epochs").get<std::size_t>();
  if (params.contains("ablation"))
    opts.config = gnn::make_ablation(opts.config, gnn::parse_ablation(params.at("ablation").get<std::string>()));
  if (params.contains("labels")) opts.labels = params.at("labels").get<std::string>();
  opts.config.validate();
  return opts;
}

}  // namespace

const char* to_string(JobKind k) {
  switch (k) {
    case JobKind::Train: return "train";
    case JobKind::Predict: return "predict";
    case JobKind::Summarize: return "summarize";
    case JobKind::Enrich: return "enrich";
  }
  return "?";
}

const char* to_string(JobStatus s) {
  switch (s) {
    case JobStatus::Queued: return "queued";
    case JobStatus::Running: return "running";
    case JobStatus::Done: return "done";
    case JobStatus::Failed: return "failed";
  }
  return "?";
}

JobKind parse_job_kind(const std::string& s) {
  if (s == "train") return JobKind::Train;
  if (s == "predict") return JobKind::Predict;
  if (s == "summarize") return JobKind::Summarize;
  if (s == "enrich") return JobKind::Enrich;
  fail(ErrorKind::Validation, "unknown job kind '" + s + "' (expected train, predict, summarize or enrich)");
}

namespace {

JobStatus parse_status(const std::string& s) {
  if (s == "queued") return JobStatus::Queued;
  if (s == "running") return JobStatus::Running;
  if (s == "done") return JobStatus::Done;
  if (s == "failed") return JobStatus::Failed;
  fail(ErrorKind::Format, "unknown job status '" + s + "'");
}

}  // namespace

json to_json(const Job& job) {
  json doc = {{"id", job.id},
              {"project_id", job.project_id},
              {"kind", to_string(job.kind)},
              {"status", to_string(job.status)},
              {"progress", job.progress},
              {"params", job.params},
              {"result", job.result},
              {"error", job.error.empty() ? json() : json(job.error)},
              {"created_at", job.created_at},
              {"updated_at", job.updated_at}};
  return doc;
}

Job job_from_json(const json& doc) {
  Job j;
  j.id = doc.at("id").get<std::string>();
  j.project_id = doc.at("project_id").get<std::string>();
  j.kind = parse_job_kind(doc.at("kind").get<std::string>());
  j.status = parse_status(doc.at("status").get<std::string>());
  j.progress = doc.at("progress").get<double>();
  j.params = doc.value("params", json::object());
  j.result = doc.value("result", json());
  if (doc.contains("error") && doc.at("error").is_string()) j.error = doc.at("error").get<std::string>();
  j.created_at = doc.value("created_at", "");
  j.updated_at = doc.value("updated_at", "");
  return j;
}

json to_json(const Project& p, const fs::path& dir) {
  json artifacts = json::object();
  for (const char* name : {files::kIngest, files::kGraph, files::kCells, files::kSplit, files::kModel,
                           files::kTrainReport, files::kPredict, files::kPredicted, files::kPaths,
                           files::kSummary, files::kSelections})
    if (fs::exists(dir / name)) artifacts[name] = (dir / name).string();
  return {{"id", p.id},
          {"dataset", p.dataset},
          {"ingest_options", p.ingest_options},
          {"state",
           {{"ingested", p.state.ingested},
            {"trained", p.state.trained},
            {"predicted", p.state.predicted},
            {"summarized", p.state.summarized}}},
          {"artifacts", artifacts},
          {"created_at", p.created_at},
          {"updated_at", p.updated_at}};
}

// ---- lifecycle --------------------------------------------------------------

Service::Service(fs::path root, std::size_t workers) : root_(fs::absolute(std::move(root))) {
  fs::create_directories(root_ / "projects");
  fs::create_directories(root_ / "jobs");

  for (const auto& e : fs::directory_iterator(root_ / "projects")) {
    if (!e.is_directory() || !fs::exists(e.path() / "project.json")) continue;
    const json doc = pipeline::read_json(e.path() / "project.json");
    auto s = std::make_unique<Slot>();
    Project& p = s->project;
    p.id = doc.at("id").get<std::string>();
    p.dataset = doc.at("dataset").get<std::string>();
    p.ingest_options = doc.value("ingest_options", json::object());
    const json& st = doc.at("state");
    p.state = {st.at("ingested").get<bool>(), st.at("trained").get<bool>(), st.at("predicted").get<bool>(),
               st.at("summarized").get<bool>()};
    p.created_at = doc.value("created_at", "");
    p.updated_at = doc.value("updated_at", "");
    // Leftovers of jobs interrupted mid-run.
    for (const auto& f : fs::directory_iterator(e.path()))
      if (f.path().filename().string().rfind(".staging-", 0) == 0) fs::remove_all(f.path());
    project_counter_ = std::max(project_counter_, id_number(p.id));
    slots_.emplace(p.id, std::move(s));
  }

  for (const auto& e : fs::directory_iterator(root_ / "jobs")) {
    if (e.path().extension() != ".json") continue;
    Job j = job_from_json(pipeline::read_json(e.path()));
    if (!j.terminal()) {
      j.status = JobStatus::Failed;
      j.error = "interrupted by service restart";
      j.updated_at = now_iso();
      save_job(j);
    }
    job_counter_ = std::max(job_counter_, id_number(j.id));
    jobs_.emplace(j.id, std::move(j));
  }

  workers = std::max<std::size_t>(workers, 1);
  for (std::size_t i = 0; i < workers; ++i) workers_.emplace_back([this] { worker_loop(); });
}

Service::~Service() {
  {
    std::lock_guard lock(mu_);
    stopping_ = true;
  }
  cv_.notify_all();
  for (auto& t : workers_) t.join();
}

Service::Slot& Service::slot(const std::string& id) const {
  std::lock_guard lock(mu_);
  auto it = slots_.find(id);
  if (it == slots_.end()) fail(ErrorKind::NotFound, "unknown project '" + id + "'");
  return *it->second;
}

void Service::save_project(const Slot& s) const {
  pipeline::write_json(project_dir(s.project.id) / "project.json",
                       to_json(s.project, project_dir(s.project.id)));
}

void Service::save_job(const Job& job) const {
  pipeline::write_json(root_ / "jobs" / (job.id + ".json"), to_json(job));
}

std::string Service::next_id(char prefix, std::uint64_t& counter) const {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%c%06llu", prefix, static_cast<unsigned long long>(++counter));
  return buf;
}

// ---- projects ---------------------------------------------------------------

json Service::create_project(const json& body) {
  if (!body.is_object() || !body.contains("dataset") || !body.at("dataset").is_string())
    fail(ErrorKind::Validation, "request body must be an object with a string 'dataset'");
  pipeline::IngestOptions opts;
  opts.dataset = fs::absolute(body.at("dataset").get<std::string>());
  if (body.contains("embeddings")) opts.embeddings = fs::absolute(body.at("embeddings").get<std::string>());
  if (body.contains("min_cells")) opts.min_cells = body.at("min_cells").get<std::size_t>();
  if (body.contains("deg_count")) opts.deg_count = body.at("deg_count").get<std::size_t>();
  if (body.contains("embedding_seed")) opts.embedding_seed = body.at("embedding_seed").get<std::uint64_t>();

  std::string id;
  {
    std::lock_guard lock(mu_);
    id = next_id('p', project_counter_);
  }
  const fs::path dir = project_dir(id);
  const fs::path staging = root_ / "projects" / (".ingest-" + id);
  fs::remove_all(staging);
  try {
    pipeline::run_ingest(opts, staging);
  } catch (...) {
    fs::remove_all(staging);
    throw;
  }
  fs::rename(staging, dir);

  auto s = std::make_unique<Slot>();
  Project& p = s->project;
  p.id = id;
  p.dataset = opts.dataset.string();
  p.ingest_options = {{"min_cells", opts.min_cells},
                      {"deg_count", opts.deg_count},
                      {"embedding_seed", opts.embedding_seed}};
  if (opts.embeddings) p.ingest_options["embeddings"] = opts.embeddings->string();
  p.state.ingested = true;
  p.created_at = p.updated_at = now_iso();
  save_project(*s);
  json out = to_json(p, dir);
  std::lock_guard lock(mu_);
  slots_.emplace(id, std::move(s));
  return out;
}

json Service::get_project(const std::string& id) const {
  Slot& s = slot(id);
  std::shared_lock lock(s.rw);
  return to_json(s.project, project_dir(id));
}

json Service::list_projects() const {
  std::vector<std::string> ids;
  {
    std::lock_guard lock(mu_);
    for (const auto& [id, _] : slots_) ids.push_back(id);
  }
  json out = json::array();
  for (const auto& id : ids) out.push_back(get_project(id));
  return out;
}

// ---- jobs ---------------------------------------------------------------------

void Service::require_stage(const Project& p, JobKind kind) const {
  const bool ok = [&] {
    switch (kind) {
      case JobKind::Train: return p.state.ingested;
      case JobKind::Predict: return p.state.trained;
      case JobKind::Summarize: return p.state.predicted;
      case JobKind::Enrich: return p.state.predicted;
    }
    return false;
  }();
  if (!ok)
    fail(ErrorKind::Conflict, std::string(to_string(kind)) + " requires stage '" + stage_of(kind) +
                                  "', which has not been run for project " + p.id);
}

json Service::submit_job(const std::string& project_id, const std::string& kind, const json& params) {
  const JobKind k = parse_job_kind(kind);
  if (!params.is_object()) fail(ErrorKind::Validation, "job params must be an object");
  Slot& s = slot(project_id);
  {
    std::shared_lock lock(s.rw);
    require_stage(s.project, k);
  }
  // Reject malformed parameters before queueing.
  if (k == JobKind::Train) train_options(params);
  if (k == JobKind::Enrich && !(params.contains("trajectory_id") && params.at("trajectory_id").is_string()))
    fail(ErrorKind::Validation, "enrich job requires a string 'trajectory_id'");

  Job j;
  j.project_id = project_id;
  j.kind = k;
  j.params = params;
  j.created_at = j.updated_at = now_iso();
  {
    std::lock_guard lock(mu_);
    j.id = next_id('j', job_counter_);
    save_job(j);
    jobs_.emplace(j.id, j);
    queue_.push_back(j.id);
  }
  cv_.notify_all();
  return to_json(j);
}

json Service::get_job(const std::string& id) const {
  std::lock_guard lock(mu_);
  auto it = jobs_.find(id);
  if (it == jobs_.end()) fail(ErrorKind::NotFound, "unknown job '" + id + "'");
  return to_json(it->second);
}

json Service::wait_job(const std::string& id, double timeout_seconds) const {
  std::unique_lock lock(mu_);
  auto it = jobs_.find(id);
  if (it == jobs_.end()) fail(ErrorKind::NotFound, "unknown job '" + id + "'");
  cv_.wait_for(lock, std::chrono::duration<double>(timeout_seconds),
               [&] { return jobs_.at(id).terminal(); });
  return to_json(jobs_.at(id));
}

void Service::update_job(const std::string& id, const std::function<void(Job&)>& fn) {
  {
    std::lock_guard lock(mu_);
    Job& j = jobs_.at(id);
    if (j.terminal()) return;
    fn(j);
    j.updated_at = now_iso();
    save_job(j);
  }
  cv_.notify_all();
}

void Service::worker_loop() {
  while (true) {
    std::string job_id;
    Slot* s = nullptr;
    {
      std::unique_lock lock(mu_);
      // First queued job whose project has nothing running.
      auto pick = [&] {
        for (auto it = queue_.begin(); it != queue_.end(); ++it) {
          Slot& cand = *slots_.at(jobs_.at(*it).project_id);
          if (!cand.busy) {
            job_id = *it;
            s = &cand;
            queue_.erase(it);
            return true;
          }
        }
        return false;
      };
      cv_.wait(lock, [&] { return stopping_ || pick(); });
      if (stopping_ && !s) return;
      s->busy = true;
    }
    update_job(job_id, [](Job& j) { j.status = JobStatus::Running; });

    Job job;
    {
      std::lock_guard lock(mu_);
      job = jobs_.at(job_id);
    }
    const fs::path dir = project_dir(job.project_id);
    const fs::path staging = dir / (".staging-" + job.id);
    try {
      {
        std::shared_lock lock(s->rw);
        require_stage(s->project, job.kind);
        fs::remove_all(staging);
        fs::create_directories(staging);
        for (const auto& e : fs::directory_iterator(dir)) {
          const std::string name = e.path().filename().string();
          if (name == "project.json" || name.rfind(".staging-", 0) == 0) continue;
          fs::copy(e.path(), staging / name, fs::copy_options::recursive);
        }
      }
      json result = run_job(job, staging);
      commit(*s, job.kind, staging);
      update_job(job_id, [&](Job& j) {
        j.result = std::move(result);
        j.progress = 1.0;
        j.status = JobStatus::Done;
      });
    } catch (const std::exception& e) {
      fs::remove_all(staging);
      const std::string kind = [&]() -> std::string {
        if (const auto* ce = dynamic_cast<const Error*>(&e)) return crosstraj::to_string(ce->kind());
        return "internal";
      }();
      update_job(job_id, [&](Job& j) {
        j.status = JobStatus::Failed;
        j.error = kind + ": " + e.what();
      });
    }
    {
      std::lock_guard lock(mu_);
      s->busy = false;
    }
    cv_.notify_all();
  }
}

json Service::run_job(const Job& job, const fs::path& staging) {
  switch (job.kind) {
    case JobKind::Train: {
      const auto opts = train_options(job.params);
      const auto report = pipeline::run_train(staging, opts, [&](std::size_t epoch, std::size_t epochs, double) {
        const double p = epochs ? static_cast<double>(epoch) / static_cast<double>(epochs) : 0.0;
        update_job(job.id, [&](Job& j) { j.progress = std::max(j.progress, std::min(p, 0.99)); });
      });
      json out = gnn::to_json(report);
      out["wall_seconds"] = report.wall_seconds;
      return out;
    }
    case JobKind::Predict: {
      pipeline::PredictOptions opts;
      if (job.params.contains("threshold")) opts.threshold = job.params.at("threshold").get<double>();
      json out = {{"predict", pipeline::run_predict(staging, opts)}};
      update_job(job.id, [](Job& j) { j.progress = std::max(j.progress, 0.5); });
      pipeline::PathsOptions popts;
      if (job.params.contains("max_len")) popts.max_len = job.params.at("max_len").get<std::size_t>();
      if (job.params.contains("fraction")) popts.fraction = job.params.at("fraction").get<double>();
      out["paths"] = pipeline::run_paths(staging, popts);
      return out;
    }
    case JobKind::Summarize: {
      return pipeline::run_summarize(staging);
    }
    case JobKind::Enrich: {
      pipeline::EnrichOptions opts;
      opts.trajectory_id = job.params.at("trajectory_id").get<std::string>();
      return pipeline::run_enrich(staging, opts);
    }
  }
  return {};
}

void Service::commit(Slot& s, JobKind kind, const fs::path& staging) {
  std::unique_lock lock(s.rw);
  const fs::path dir = project_dir(s.project.id);
  ProjectState& st = s.project.state;
  switch (kind) {
    case JobKind::Train:
      remove_all(dir, kPredictFiles);
      remove_all(dir, kSummaryFiles);
      st.trained = true;
      st.predicted = st.summarized = false;
      break;
    case JobKind::Predict:
      remove_all(dir, kPredictFiles);
      remove_all(dir, kSummaryFiles);
      st.predicted = true;
      st.summarized = false;
      break;
    case JobKind::Summarize:
      st.summarized = true;
      break;
    case JobKind::Enrich:
      break;
  }
  // Files the job did not touch are unchanged copies; only replace those
  // that belong to this stage so concurrent selections are not clobbered.
  std::vector<std::string> owned;
  switch (kind) {
    case JobKind::Train: owned = kTrainFiles; break;
    case JobKind::Predict: owned = {files::kPredict, files::kPredicted, files::kPaths}; break;
    case JobKind::Summarize: owned = kSummaryFiles; break;
    case JobKind::Enrich: owned = {files::kEnrichDir}; break;
  }
  for (const auto& name : owned) {
    const fs::path src = staging / name;
    if (!fs::exists(src)) continue;
    if (fs::is_directory(src)) {
      move_tree(src, dir / name);
    } else {
      fs::rename(src, dir / name);
    }
  }
  fs::remove_all(staging);
  s.project.updated_at = now_iso();
  save_project(s);
}

// ---- views ---------------------------------------------------------------------

namespace {

void require_flag(bool flag, const char* stage, const std::string& project) {
  if (!flag)
    fail(ErrorKind::Conflict, std::string("stage '") + stage + "' has not been run for project " + project);
}

}  // namespace

json Service::cells_view(const std::string& project_id) const {
  Slot& s = slot(project_id);
  std::shared_lock lock(s.rw);
  require_flag(s.project.state.ingested, "ingest", project_id);
  return pipeline::cells_view(project_dir(project_id));
}

json Service::path_tree_view(const std::string& project_id, const std::string& core,
                             std::size_t min_freq) const {
  Slot& s = slot(project_id);
  std::shared_lock lock(s.rw);
  require_flag(s.project.state.predicted, "predict", project_id);
  return pipeline::path_tree_view(project_dir(project_id), core, min_freq);
}

json Service::select_paths(const std::string& project_id, const json& body) {
  if (!body.is_object() || !body.contains("sequences") || !body.at("sequences").is_array())
    fail(ErrorKind::Validation, "request body must contain an array 'sequences'");
  std::vector<std::vector<std::string>> seqs;
  try {
    seqs = body.at("sequences").get<std::vector<std::vector<std::string>>>();
  } catch (const json::exception&) {
    fail(ErrorKind::Validation, "'sequences' must be an array of arrays of cell types");
  }
  std::optional<std::string> core;
  if (body.contains("core") && !body.at("core").is_null()) core = body.at("core").get<std::string>();
  const std::size_t min_freq = body.value("min_freq", std::size_t{0});
  Slot& s = slot(project_id);
  std::unique_lock lock(s.rw);
  require_flag(s.project.state.predicted, "predict", project_id);
  return pipeline::select_paths(project_dir(project_id), seqs, core, min_freq);
}

json Service::path_summary_view(const std::string& project_id, const std::vector<std::string>& ids,
                                const std::optional<std::string>& core) const {
  Slot& s = slot(project_id);
  std::shared_lock lock(s.rw);
  require_flag(s.project.state.summarized, "summarize", project_id);
  return pipeline::path_summary_view(project_dir(project_id), ids, core);
}

json Service::trajectories_view(const std::string& project_id, const std::string& path,
                                const std::optional<std::string>& core) const {
  Slot& s = slot(project_id);
  std::shared_lock lock(s.rw);
  require_flag(s.project.state.summarized, "summarize", project_id);
  return pipeline::trajectories_view(project_dir(project_id), path, core);
}

json Service::enrich(const std::string& project_id, const json& body) {
  if (!body.is_object() || !body.contains("trajectory_id") || !body.at("trajectory_id").is_string())
    fail(ErrorKind::Validation, "request body must contain a string 'trajectory_id'");
  Slot& s = slot(project_id);
  std::unique_lock lock(s.rw);
  require_flag(s.project.state.predicted, "predict", project_id);
  pipeline::EnrichOptions opts;
  opts.trajectory_id = body.at("trajectory_id").get<std::string>();
  return pipeline::run_enrich(project_dir(project_id), opts);
}

// ---- HTTP -------------------------------------------------------------------------

namespace {

int status_for(ErrorKind k) {
  switch (k) {
    case ErrorKind::NotFound: return 404;
    case ErrorKind::Conflict: return 409;
    case ErrorKind::Format:
    case ErrorKind::Precondition:
    case ErrorKind::Validation:
    case ErrorKind::Numeric: return 422;
    case ErrorKind::Io: return 500;
  }
  return 500;
}

void reply(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void reply_error(httplib::Response& res, int status, const std::string& kind, const std::string& message) {
  reply(res, status, {{"error", {{"kind", kind}, {"message", message}}}});
}

json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return json::object();
  try {
    return json::parse(req.body);
  } catch (const json::exception& e) {
    fail(ErrorKind::Format, std::string("request body is not valid JSON: ") + e.what());
  }
}

template <class Fn>
httplib::Server::Handler guarded(Fn fn) {
  return [fn](const httplib::Request& req, httplib::Response& res) {
    try {
      fn(req, res);
    } catch (const Error& e) {
      const int status = (e.kind() == ErrorKind::Format) ? 400 : status_for(e.kind());
      reply_error(res, status, crosstraj::to_string(e.kind()), e.what());
    } catch (const json::exception& e) {
      reply_error(res, 422, "validation", e.what());
    } catch (const std::exception& e) {
      reply_error(res, 500, "internal", e.what());
    }
  };
}

std::vector<std::string> split_ids(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, ','))
    if (!cur.empty()) out.push_back(cur);
  return out;
}

std::optional<std::string> opt_param(const httplib::Request& req, const char* key) {
  if (!req.has_param(key)) return std::nullopt;
  std::string v = req.get_param_value(key);
  if (v.empty()) return std::nullopt;
  return v;
}

std::size_t size_param(const httplib::Request& req, const char* key, std::size_t fallback) {
  const auto v = opt_param(req, key);
  if (!v) return fallback;
  try {
    std::size_t used = 0;
    const long long n = std::stoll(*v, &used);
    if (used != v->size() || n < 0) throw std::invalid_argument(*v);
    return static_cast<std::size_t>(n);
  } catch (const std::exception&) {
    fail(ErrorKind::Validation, std::string("query parameter '") + key + "' must be a non-negative integer");
  }
}

}  // namespace

void Service::mount(httplib::Server& server) {
  server.Get("/api/health", guarded([](const httplib::Request&, httplib::Response& res) {
    reply(res, 200, {{"status", "ok"}});
  }));
  server.Post("/api/projects", guarded([this](const httplib::Request& req, httplib::Response& res) {
    const json body = parse_body(req);
    try {
      reply(res, 201, create_project(body));
    } catch (const Error& e) {
      // Any rejection of the dataset itself is a 422 with the ingest diagnostic.
      if (e.kind() == ErrorKind::Conflict) throw;
      reply_error(res, 422, crosstraj::to_string(e.kind()), e.what());
    }
  }));
  server.Get("/api/projects", guarded([this](const httplib::Request&, httplib::Response& res) {
    reply(res, 200, list_projects());
  }));
  server.Get(R"(/api/projects/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
    reply(res, 200, get_project(req.matches[1]));
  }));
  server.Post(R"(/api/projects/([^/]+)/jobs)",
              guarded([this](const httplib::Request& req, httplib::Response& res) {
                const json body = parse_body(req);
                if (!body.contains("kind") || !body.at("kind").is_string())
                  fail(ErrorKind::Validation, "request body must contain a string 'kind'");
                reply(res, 202, submit_job(req.matches[1], body.at("kind").get<std::string>(),
                                           body.value("params", json::object())));
              }));
  server.Get(R"(/api/jobs/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
    reply(res, 200, get_job(req.matches[1]));
  }));
  server.Get(R"(/api/projects/([^/]+)/views/cells)",
             guarded([this](const httplib::Request& req, httplib::Response& res) {
               reply(res, 200, cells_view(req.matches[1]));
             }));
  server.Get(R"(/api/projects/([^/]+)/views/path-tree)",
             guarded([this](const httplib::Request& req, httplib::Response& res) {
               const auto core = opt_param(req, "core");
               if (!core) fail(ErrorKind::Validation, "query parameter 'core' is required");
               reply(res, 200, path_tree_view(req.matches[1], *core, size_param(req, "min_freq", 0)));
             }));
  server.Post(R"(/api/projects/([^/]+)/paths)",
              guarded([this](const httplib::Request& req, httplib::Response& res) {
                reply(res, 200, select_paths(req.matches[1], parse_body(req)));
              }));
  server.Get(R"(/api/projects/([^/]+)/views/path-summary)",
             guarded([this](const httplib::Request& req, httplib::Response& res) {
               const auto ids = opt_param(req, "ids");
               if (!ids) fail(ErrorKind::Validation, "query parameter 'ids' is required");
               reply(res, 200, path_summary_view(req.matches[1], split_ids(*ids), opt_param(req, "core")));
             }));
  server.Get(R"(/api/projects/([^/]+)/views/trajectories)",
             guarded([this](const httplib::Request& req, httplib::Response& res) {
               const auto path = opt_param(req, "path");
               if (!path) fail(ErrorKind::Validation, "query parameter 'path' is required");
               reply(res, 200, trajectories_view(req.matches[1], *path, opt_param(req, "core")));
             }));
  server.Post(R"(/api/projects/([^/]+)/enrich)",
              guarded([this](const httplib::Request& req, httplib::Response& res) {
                reply(res, 200, enrich(req.matches[1], parse_body(req)));
              }));
}

int serve(Service& service, const ServeOptions& options, const std::function<void(int)>& on_bound,
          httplib::Server* server) {
  httplib::Server local;
  httplib::Server& svr = server ? *server : local;
  service.mount(svr);
  if (options.static_dir) {
    if (!svr.set_mount_point("/", options.static_dir->string()))
      fail(ErrorKind::NotFound, "static directory " + options.static_dir->string() + " does not exist");
  }
  int port = options.port;
  if (port == 0) {
    port = svr.bind_to_any_port(options.host);
    if (port < 0) fail(ErrorKind::Io, "cannot bind " + options.host);
  } else if (!svr.bind_to_port(options.host, port)) {
    fail(ErrorKind::Io, "cannot bind " + options.host + ":" + std::to_string(port));
  }
  if (on_bound) on_bound(port);
  svr.listen_after_bind();
  return port;
}

}  // namespace crosstraj::service
