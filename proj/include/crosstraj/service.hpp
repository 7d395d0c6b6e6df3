#pragma once

// Project store, background job execution and the HTTP API under /api.
//
// Layout under the service root:
//   projects/<project_id>/project.json   state flags and metadata
//   projects/<project_id>/*.json, *.ckpt pipeline artifacts
//   jobs/<job_id>.json                   job records
//
// Jobs run against a staging copy of the project directory and are
// committed by renaming their outputs into place under the project's
// exclusive lock, so readers always see the last committed state.

#include <condition_variable>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

namespace httplib {
class Server;
}

namespace crosstraj::service {

namespace fs = std::filesystem;
using nlohmann::json;

enum class JobKind { Train, Predict, Summarize, Enrich };
enum class JobStatus { Queued, Running, Done, Failed };

const char* to_string(JobKind k);
const char* to_string(JobStatus s);
JobKind parse_job_kind(const std::string& s);

struct Job {
  std::string id;
  std::string project_id;
  JobKind kind = JobKind::Train;
  JobStatus status = JobStatus::Queued;
  double progress = 0.0;
  json params = json::object();
  json result;          // null until done
  std::string error;    // set when failed
  std::string created_at;
  std::string updated_at;

  bool terminal() const { return status == JobStatus::Done || status == JobStatus::Failed; }
};

json to_json(const Job& job);
Job job_from_json(const json& doc);

struct ProjectState {
  bool ingested = false;
  bool trained = false;
  bool predicted = false;
  bool summarized = false;
};

struct Project {
  std::string id;
  std::string dataset;
  json ingest_options = json::object();
  ProjectState state;
  std::string created_at;
  std::string updated_at;
};

json to_json(const Project& p, const fs::path& dir);

class Service {
 public:
  // Loads persisted projects and jobs; jobs that were queued or running are
  // marked failed. Starts `workers` background threads.
  explicit Service(fs::path root, std::size_t workers = 2);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  const fs::path& root() const noexcept { return root_; }

  // body: {"dataset": path, "embeddings"?: path, "min_cells"?: n}
  json create_project(const json& body);
  json get_project(const std::string& id) const;
  json list_projects() const;

  json submit_job(const std::string& project_id, const std::string& kind, const json& params);
  json get_job(const std::string& id) const;
  // Blocks until the job is terminal or the timeout passes; returns the record.
  json wait_job(const std::string& id, double timeout_seconds) const;

  json cells_view(const std::string& project_id) const;
  json path_tree_view(const std::string& project_id, const std::string& core, std::size_t min_freq) const;
  json select_paths(const std::string& project_id, const json& body);
  json path_summary_view(const std::string& project_id, const std::vector<std::string>& ids,
                         const std::optional<std::string>& core) const;
  json trajectories_view(const std::string& project_id, const std::string& path,
                         const std::optional<std::string>& core) const;
  json enrich(const std::string& project_id, const json& body);

  void mount(httplib::Server& server);

 private:
  struct Slot {
    Project project;
    mutable std::shared_mutex rw;  // artifacts: shared for views, exclusive for commits
    bool busy = false;             // a job of this project is running
  };

  fs::path project_dir(const std::string& id) const { return root_ / "projects" / id; }
  Slot& slot(const std::string& id) const;
  void save_project(const Slot& s) const;
  void save_job(const Job& job) const;
  std::string next_id(char prefix, std::uint64_t& counter) const;
  void require_stage(const Project& p, JobKind kind) const;
  void worker_loop();
  json run_job(const Job& job, const fs::path& staging);
  void commit(Slot& s, JobKind kind, const fs::path& staging);
  void update_job(const std::string& id, const std::function<void(Job&)>& fn);

  fs::path root_;
  mutable std::mutex mu_;  // guards slots_, jobs_, queue_, counters
  mutable std::condition_variable cv_;
  std::map<std::string, std::unique_ptr<Slot>> slots_;
  std::map<std::string, Job> jobs_;
  std::deque<std::string> queue_;
  mutable std::uint64_t project_counter_ = 0;
  mutable std::uint64_t job_counter_ = 0;
  bool stopping_ = false;
  std::vector<std::thread> workers_;
};

// Binds host:port (0 = ephemeral), reports the bound port through
// `on_bound`, then serves until the server is stopped.
struct ServeOptions {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::optional<fs::path> static_dir;  // UI bundle mounted at /
};

int serve(Service& service, const ServeOptions& options, const std::function<void(int)>& on_bound,
          httplib::Server* server = nullptr);

}  // namespace crosstraj::service
