#include "polarloc/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "polarloc/binary_io.hpp"
#include "polarloc/error.hpp"

namespace ploc {

namespace fs = std::filesystem;

double planar_distance(const Pose& a, const Pose& b) { return std::hypot(a.x - b.x, a.y - b.y); }

std::string format_double(double value) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

namespace {

double parse_double(const std::string& text, const std::string& context) {
  double value = 0;
  const char* begin = text.data();
  const char* end = begin + text.size();
  while (begin < end && std::isspace(static_cast<unsigned char>(*begin))) ++begin;
  while (end > begin && std::isspace(static_cast<unsigned char>(end[-1]))) --end;
  auto res = std::from_chars(begin, end, value);
  if (res.ec != std::errc() || res.ptr != end) throw DataError(context + ": cannot parse number '" + text + "'");
  return value;
}

void check_image(const PolarScan& scan, const std::string& context) {
  if (scan.angular_bins == 0 || scan.radial_bins == 0 ||
      scan.image.size() != scan.angular_bins * scan.radial_bins)
    throw DataError(context + ": image size does not match its extents");
  for (float v : scan.image)
    if (!std::isfinite(v)) throw DataError(context + ": non-finite pixel");
}

}  // namespace

// --- file formats -----------------------------------------------------------

void write_plsc(const fs::path& path, const PolarScan& scan) {
  check_image(scan, "scan " + scan.id);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open for writing: " + path.string());
  out << "PLSC " << scan.angular_bins << ' ' << scan.radial_bins << ' ' << format_double(scan.timestamp) << '\n';
  for (float v : scan.image) binary::write_f32(out, v);
  if (!out) throw DataError("failed writing " + path.string());
}

PolarScan read_plsc(const fs::path& path) {
  const std::string id = path.stem().string();
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("scan " + id + ": cannot open " + path.string());
  std::string header;
  std::getline(in, header);
  std::istringstream hs(header);
  std::string magic, ts;
  PolarScan scan;
  scan.id = id;
  if (!(hs >> magic >> scan.angular_bins >> scan.radial_bins >> ts) || magic != "PLSC")
    throw DataError("scan " + id + ": malformed PLSC header");
  scan.timestamp = parse_double(ts, "scan " + id);
  if (scan.angular_bins == 0 || scan.radial_bins == 0 || scan.angular_bins * scan.radial_bins > (1u << 28))
    throw DataError("scan " + id + ": bad image extents");
  scan.image.resize(scan.angular_bins * scan.radial_bins);
  try {
    for (auto& v : scan.image) v = binary::read_f32(in);
  } catch (const DataError&) {
    throw DataError("scan " + id + ": truncated image data");
  }
  check_image(scan, "scan " + id);
  return scan;
}

PolarScan read_pgm(const fs::path& path) {
  const std::string id = path.stem().string();
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("scan " + id + ": cannot open " + path.string());
  auto next_token = [&]() {
    std::string token;
    int c;
    while ((c = in.get()) != EOF) {
      if (c == '#') {
        while ((c = in.get()) != EOF && c != '\n') {
        }
        continue;
      }
      if (std::isspace(c)) {
        if (!token.empty()) break;
        continue;
      }
      token.push_back(static_cast<char>(c));
    }
    return token;
  };
  if (next_token() != "P5") throw DataError("scan " + id + ": not a binary PGM (P5)");
  PolarScan scan;
  scan.id = id;
  std::size_t width = 0, height = 0, maxval = 0;
  try {
    width = std::stoul(next_token());
    height = std::stoul(next_token());
    maxval = std::stoul(next_token());
  } catch (const std::exception&) {
    throw DataError("scan " + id + ": malformed PGM header");
  }
  if (width == 0 || height == 0 || maxval == 0 || maxval > 255)
    throw DataError("scan " + id + ": unsupported PGM extents or maxval");
  scan.angular_bins = height;
  scan.radial_bins = width;
  std::vector<unsigned char> bytes(width * height);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!in) throw DataError("scan " + id + ": truncated PGM data");
  scan.image.resize(bytes.size());
  for (std::size_t i = 0; i < bytes.size(); ++i)
    scan.image[i] = static_cast<float>(bytes[i]) / static_cast<float>(maxval);
  scan.timestamp = parse_double(id, "scan " + id + " (timestamp from file name)");
  return scan;
}

PolarScan read_scan(const fs::path& path) {
  const auto ext = path.extension().string();
  if (ext == ".plsc") return read_plsc(path);
  if (ext == ".pgm") return read_pgm(path);
  throw DataError("scan " + path.stem().string() + ": unsupported file type " + ext);
}

std::vector<Pose> read_poses_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open pose file " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty pose file " + path.string());
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "timestamp,x,y,yaw") throw DataError("pose file must start with header timestamp,x,y,yaw");
  std::vector<Pose> poses;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    const std::string ctx = path.filename().string() + ":" + std::to_string(line_no);
    if (fields.size() != 4) throw DataError(ctx + ": expected 4 fields");
    Pose p{parse_double(fields[0], ctx), parse_double(fields[1], ctx), parse_double(fields[2], ctx),
           parse_double(fields[3], ctx)};
    if (!poses.empty() && p.timestamp <= poses.back().timestamp)
      throw DataError(ctx + ": pose timestamps must be strictly increasing");
    poses.push_back(p);
  }
  return poses;
}

void write_poses_csv(const fs::path& path, std::span<const Pose> poses) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open for writing: " + path.string());
  out << "timestamp,x,y,yaw\n";
  for (const auto& p : poses)
    out << format_double(p.timestamp) << ',' << format_double(p.x) << ',' << format_double(p.y) << ','
        << format_double(p.yaw) << '\n';
  if (!out) throw DataError("failed writing " + path.string());
}

// --- image helpers ----------------------------------------------------------

PolarScan resample_bilinear(const PolarScan& scan, std::size_t angular_bins, std::size_t radial_bins) {
  if (scan.angular_bins == angular_bins && scan.radial_bins == radial_bins) return scan;
  PolarScan out = scan;
  out.angular_bins = angular_bins;
  out.radial_bins = radial_bins;
  out.image.assign(angular_bins * radial_bins, 0.0f);
  const double sa = static_cast<double>(scan.angular_bins) / static_cast<double>(angular_bins);
  const double sr = static_cast<double>(scan.radial_bins) / static_cast<double>(radial_bins);
  const auto A = static_cast<std::ptrdiff_t>(scan.angular_bins);
  const auto R = static_cast<std::ptrdiff_t>(scan.radial_bins);
  for (std::size_t a = 0; a < angular_bins; ++a) {
    // Azimuth wraps around; range clamps at the edges.
    const double fa = (static_cast<double>(a) + 0.5) * sa - 0.5;
    const auto a0 = static_cast<std::ptrdiff_t>(std::floor(fa));
    const double wa = fa - static_cast<double>(a0);
    const std::size_t a0w = static_cast<std::size_t>(((a0 % A) + A) % A);
    const std::size_t a1w = static_cast<std::size_t>((((a0 + 1) % A) + A) % A);
    for (std::size_t r = 0; r < radial_bins; ++r) {
      const double fr = std::clamp((static_cast<double>(r) + 0.5) * sr - 0.5, 0.0, static_cast<double>(R - 1));
      const auto r0 = static_cast<std::size_t>(std::floor(fr));
      const std::size_t r1 = std::min<std::size_t>(r0 + 1, static_cast<std::size_t>(R - 1));
      const double wr = fr - static_cast<double>(r0);
      const double v = (1 - wa) * ((1 - wr) * scan.at(a0w, r0) + wr * scan.at(a0w, r1)) +
                       wa * ((1 - wr) * scan.at(a1w, r0) + wr * scan.at(a1w, r1));
      out.at(a, r) = static_cast<float>(v);
    }
  }
  return out;
}

void normalize_minmax(PolarScan& scan) {
  if (scan.image.empty()) return;
  const auto [lo, hi] = std::minmax_element(scan.image.begin(), scan.image.end());
  const float min = *lo, max = *hi;
  if (max > min) {
    for (auto& v : scan.image) v = (v - min) / (max - min);
  } else {
    std::fill(scan.image.begin(), scan.image.end(), 0.0f);
  }
}

PolarScan roll_angular(const PolarScan& scan, std::ptrdiff_t shift) {
  PolarScan out = scan;
  const auto A = static_cast<std::ptrdiff_t>(scan.angular_bins);
  const std::size_t R = scan.radial_bins;
  for (std::ptrdiff_t a = 0; a < A; ++a) {
    const std::size_t src = static_cast<std::size_t>((((a + shift) % A) + A) % A);
    std::copy_n(scan.image.begin() + static_cast<std::ptrdiff_t>(src * R), R,
                out.image.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(a) * R));
  }
  return out;
}

// --- ingestion --------------------------------------------------------------

Traversal filter_traversal(std::vector<PolarScan> scans, std::span<const Pose> poses, const FilterRules& rules,
                           std::string name, std::string role) {
  for (std::size_t i = 1; i < poses.size(); ++i)
    if (poses[i].timestamp <= poses[i - 1].timestamp)
      throw DataError("poses must have strictly increasing timestamps");
  std::sort(scans.begin(), scans.end(), [](const PolarScan& a, const PolarScan& b) {
    return a.timestamp != b.timestamp ? a.timestamp < b.timestamp : a.id < b.id;
  });

  Traversal out{std::move(name), std::move(role), {}, {}};
  for (auto& scan : scans) {
    if (poses.empty()) break;
    auto it = std::lower_bound(poses.begin(), poses.end(), scan.timestamp,
                               [](const Pose& p, double t) { return p.timestamp < t; });
    const Pose* nearest = nullptr;
    if (it != poses.end()) nearest = &*it;
    if (it != poses.begin()) {
      const Pose* before = &*(it - 1);
      if (!nearest || scan.timestamp - before->timestamp <= nearest->timestamp - scan.timestamp) nearest = before;
    }
    if (std::abs(nearest->timestamp - scan.timestamp) > rules.pose_tolerance_s) continue;
    if (!out.poses.empty() && planar_distance(out.poses.back(), *nearest) < rules.min_displacement_m) continue;

    check_image(scan, "scan " + scan.id);
    PolarScan kept = resample_bilinear(scan, rules.angular_bins, rules.radial_bins);
    normalize_minmax(kept);
    out.scans.push_back(std::move(kept));
    out.poses.push_back(*nearest);
  }
  if (out.scans.empty()) throw DataError("traversal " + out.name + ": no scans left after filtering");
  return out;
}

Traversal ingest(const fs::path& scan_dir, const fs::path& pose_file, const FilterRules& rules, std::string name,
                 std::string role) {
  if (!fs::is_directory(scan_dir)) throw DataError("scan directory not found: " + scan_dir.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(scan_dir)) {
    const auto ext = entry.path().extension().string();
    if (entry.is_regular_file() && (ext == ".plsc" || ext == ".pgm")) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<PolarScan> scans;
  scans.reserve(files.size());
  for (const auto& f : files) scans.push_back(read_scan(f));
  const auto poses = read_poses_csv(pose_file);
  if (name.empty()) name = scan_dir.parent_path().filename().string();
  return filter_traversal(std::move(scans), poses, rules, std::move(name), std::move(role));
}

Traversal ingest_directory(const fs::path& dir, const FilterRules& rules, std::string role) {
  return ingest(dir / "scans", dir / "poses.csv", rules, dir.filename().string(), std::move(role));
}

void write_traversal(const fs::path& dir, const Traversal& traversal) {
  std::error_code ec;
  fs::create_directories(dir / "scans", ec);
  if (ec) throw DataError("cannot create directory " + (dir / "scans").string() + ": " + ec.message());
  for (const auto& scan : traversal.scans) write_plsc(dir / "scans" / (scan.id + ".plsc"), scan);
  write_poses_csv(dir / "poses.csv", traversal.poses);
}

// --- place labels -----------------------------------------------------------

PairLabel label_pair(const Pose& a, const Pose& b, const PairThresholds& thresholds) {
  const double d = planar_distance(a, b);
  if (d <= thresholds.positive_radius_m) return PairLabel::Similar;
  if (d >= thresholds.negative_radius_m) return PairLabel::Dissimilar;
  return PairLabel::Excluded;
}

PairRelation label_pairs(std::span<const Pose> a, std::span<const Pose> b, const PairThresholds& thresholds) {
  PairRelation rel(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j) rel.set(i, j, label_pair(a[i], b[j], thresholds));
  return rel;
}

}  // namespace ploc
