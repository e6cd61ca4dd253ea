#include "grhd/dataset/corpus.hpp"

#include <algorithm>

#include "grhd/common/error.hpp"
#include "grhd/dataset/synth.hpp"

namespace grhd::dataset {

namespace fs = std::filesystem;

std::vector<fs::path> list_machine_clips(const fs::path& data_dir, const std::string& machine) {
  if (!fs::is_directory(data_dir)) throw Error(ErrorCode::IoError, "data directory " + data_dir.string() + " not found");
  std::vector<fs::path> out;
  for (const char* split : {"train", "test"}) {
    std::vector<std::string> names;
    // Manifest paths are relative to data_dir; scanned names are bare filenames.
    if (fs::exists(data_dir / "manifest.csv")) {
      std::vector<fs::path> rows;
      for (const auto& row : read_manifest(data_dir / "manifest.csv")) {
        if (row.metadata.machine_type == machine && to_string(row.metadata.split) == split) {
          rows.push_back(data_dir / row.filename);
        }
      }
      std::sort(rows.begin(), rows.end());
      out.insert(out.end(), rows.begin(), rows.end());
      continue;
    } else {
      const fs::path dir = data_dir / machine / split;
      if (!fs::is_directory(dir)) continue;
      for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".wav") names.push_back(entry.path().filename().string());
      }
    }
    std::sort(names.begin(), names.end());
    for (const auto& n : names) out.push_back(data_dir / machine / split / n);
  }
  return out;
}

std::vector<AudioClip> load_machine_corpus(const fs::path& data_dir, const std::string& machine) {
  std::vector<AudioClip> clips;
  for (const auto& path : list_machine_clips(data_dir, machine)) {
    clips.push_back(load_wav(path));
    clips.back().metadata.machine_type = machine;
  }
  return clips;
}

}  // namespace grhd::dataset
