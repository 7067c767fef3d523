#include "triggerlab/cli/manifest.h"

#include "triggerlab/common.h"

namespace triggerlab::cli {

Manifest::Manifest(std::filesystem::path dir, nlohmann::json config, std::uint64_t seed)
    : dir_(std::move(dir)) {
  doc_ = {{"format_version", 1},
          {"seed", seed},
          {"config", std::move(config)},
          {"status", "running"},
          {"current_stage", nullptr},
          {"failed_stage", nullptr},
          {"error", nullptr},
          {"stages", nlohmann::json::array()},
          {"outcome", nullptr}};
  write();
}

void Manifest::begin_stage(const std::string& name) {
  current_stage_ = name;
  doc_["current_stage"] = name;
  write();
}

void Manifest::complete_stage(const std::vector<std::string>& artifacts) {
  nlohmann::json list = nlohmann::json::array();
  for (const auto& rel : artifacts) {
    list.push_back({{"path", rel}, {"sha256", sha256_file(dir_ / rel)}});
  }
  doc_["stages"].push_back({{"name", current_stage_}, {"artifacts", list}});
  doc_["current_stage"] = nullptr;
  current_stage_.clear();
  write();
}

void Manifest::fail(const std::string& message) {
  doc_["status"] = "failed";
  doc_["failed_stage"] = current_stage_;
  doc_["error"] = message;
  write();
}

void Manifest::finish(nlohmann::json outcome) {
  doc_["status"] = "complete";
  doc_["outcome"] = std::move(outcome);
  write();
}

void Manifest::write() const { write_file_atomic(path(), doc_.dump(2) + "\n"); }

}  // namespace triggerlab::cli
