#include "bevloc/util.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace bevloc {

uint64_t HashFile(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open for hashing: " + path.string());
  uint64_t h = 14695981039346656037ull;
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof(buf));
    h = Fnv1a(buf, static_cast<size_t>(in.gcount()), h);
  }
  return h;
}

uint64_t HashDirectoryTree(const std::filesystem::path& root) {
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::recursive_directory_iterator(root)) {
    if (entry.is_regular_file()) files.push_back(entry.path());
  }
  std::vector<std::string> rels;
  rels.reserve(files.size());
  for (const auto& f : files) rels.push_back(std::filesystem::relative(f, root).generic_string());
  std::vector<size_t> order(files.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) { return rels[a] < rels[b]; });

  uint64_t h = 14695981039346656037ull;
  for (size_t i : order) {
    h = Fnv1a(rels[i], h);
    const uint64_t fh = HashFile(files[i]);
    h = Fnv1a(&fh, sizeof(fh), h);
  }
  return h;
}

std::string ReadTextFile(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void WriteTextFile(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  out << text;
}

}  // namespace bevloc
