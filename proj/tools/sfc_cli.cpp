// sfc: run a desk-scale experiment and write its CSV/JSON artifacts.
//
//   sfc <subcommand> [--config file.json] [--seed N] [--out dir] [--threads N]
//
// Exit status: 0 success, 1 infeasible or failed experiment, 2 usage error.
// Failures print a one-line JSON record on stderr.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "sfc/experiment.hpp"

namespace {

namespace fs = std::filesystem;
namespace ex = sfc::experiment;

int fail(std::string_view kind, std::string_view message, std::string_view command, int code) {
  std::cerr << ex::error_record(kind, message, command) << '\n';
  return code;
}

nlohmann::json load_config(const std::string& path) {
  if (path.empty()) return nullptr;
  std::ifstream in(path);
  if (!in) throw ex::UsageError("cannot open config file " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ex::UsageError("config is not valid JSON: " + std::string(e.what()));
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Semantic-feature channel experiments"};
  std::string command, config_path, out_dir = ".";
  std::optional<std::uint64_t> seed;
  unsigned threads = 1;
  std::string names;
  for (const auto& n : ex::subcommands()) names += (names.empty() ? "" : ", ") + n;
  app.add_option("subcommand", command, "one of: " + names)->required();
  app.add_option("--config", config_path, "JSON config file");
  app.add_option("--seed", seed, "64-bit seed; overrides the config");
  app.add_option("--out", out_dir, "output directory")->capture_default_str();
  app.add_option("--threads", threads, "worker threads for sweeps")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("usage", e.what(), command, 2);
  }

  try {
    const auto artifacts = ex::run(command, load_config(config_path), {seed, threads});
    fs::create_directories(out_dir);
    for (const auto& a : artifacts) {
      const auto path = fs::path(out_dir) / a.name;
      std::ofstream out(path, std::ios::binary);
      out << a.content;
      if (!out) return fail("io", "failed to write " + path.string(), command, 1);
      std::cout << path.string() << '\n';
    }
  } catch (const ex::UsageError& e) {
    return fail("usage", e.what(), command, 2);
  } catch (const sfc::InfeasibleError& e) {
    return fail("infeasible", e.what(), command, 1);
  } catch (const sfc::TrainingFailure& e) {
    return fail("training_failure", e.what(), command, 1);
  } catch (const std::exception& e) {
    return fail("failed", e.what(), command, 1);
  }
  return 0;
}
