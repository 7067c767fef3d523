#ifndef TRIGGERLAB_CLI_MANIFEST_H_
#define TRIGGERLAB_CLI_MANIFEST_H_

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace triggerlab::cli {

// manifest.json of a run directory. Rewritten atomically after every state
// change so an interrupted run always leaves a parseable manifest listing
// the stages that finished and the hashes of their artifacts.
class Manifest {
 public:
  Manifest(std::filesystem::path dir, nlohmann::json config, std::uint64_t seed);

  void begin_stage(const std::string& name);
  // Paths are relative to the run directory.
  void complete_stage(const std::vector<std::string>& artifacts);
  void fail(const std::string& message);
  void finish(nlohmann::json outcome);

  const nlohmann::json& json() const { return doc_; }
  std::filesystem::path path() const { return dir_ / "manifest.json"; }

 private:
  void write() const;

  std::filesystem::path dir_;
  nlohmann::json doc_;
  std::string current_stage_;
};

}  // namespace triggerlab::cli

#endif  // TRIGGERLAB_CLI_MANIFEST_H_
