#include "ynet/diagnosis/features.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "ynet/error.hpp"

namespace ynet::diagnosis {

namespace {

bool valid(std::uint8_t v) { return v != io::LabelMask::kInvalid; }

void check_label(std::uint8_t v) {
  if (v >= kTissueClasses) throw InputError("tissue label " + std::to_string(v) + " out of range");
}

}  // namespace

std::array<double, kTissueClasses> frequency_hist(const io::LabelMask& mask) {
  std::array<std::size_t, kTissueClasses> counts{};
  std::size_t n = 0;
  for (auto v : mask.labels) {
    if (!valid(v)) continue;
    check_label(v);
    ++counts[v];
    ++n;
  }
  if (n == 0) throw InputError("frequency histogram of a mask without valid pixels");
  std::array<double, kTissueClasses> f{};
  for (std::size_t k = 0; k < kTissueClasses; ++k) f[k] = static_cast<double>(counts[k]) / static_cast<double>(n);
  return f;
}

CoocHist cooccurrence_hist(const io::LabelMask& mask) {
  std::array<std::size_t, kPairBins> counts{};
  CoocHist h;
  auto count = [&](std::uint8_t a, std::uint8_t b) {
    if (!valid(a) || !valid(b)) return;
    check_label(a);
    check_label(b);
    ++counts[pair_index(a, b)];
    ++h.pairs;
  };
  const std::size_t W = mask.width, H = mask.height;
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x) {
      if (x + 1 < W) count(mask.at(x, y), mask.at(x + 1, y));
      if (y + 1 < H) count(mask.at(x, y), mask.at(x, y + 1));
    }
  if (h.pairs > 0)
    for (std::size_t i = 0; i < kPairBins; ++i) h.bins[i] = static_cast<double>(counts[i]) / static_cast<double>(h.pairs);
  return h;
}

FeatureVector extract_features(const io::LabelMask& mask) {
  FeatureVector f;
  const auto freq = frequency_hist(mask);
  const auto cooc = cooccurrence_hist(mask);
  std::copy(freq.begin(), freq.end(), f.values.begin());
  std::copy(cooc.bins.begin(), cooc.bins.end(), f.values.begin() + kTissueClasses);
  f.no_pairs = cooc.pairs == 0;
  return f;
}

void write_features_csv(const std::filesystem::path& path, const std::vector<FeatureRow>& rows) {
  std::ofstream f(path);
  if (!f) throw DataError("cannot write " + path.string());
  f << "roi_id";
  for (std::size_t i = 0; i < kTissueClasses; ++i) f << ",f" << i;
  for (std::size_t i = 0; i < kPairBins; ++i) f << ",c" << i;
  f << ",label\n";
  char buf[32];
  for (const auto& r : rows) {
    f << r.roi_id;
    for (double v : r.values) {
      std::snprintf(buf, sizeof buf, "%.17g", v);
      f << ',' << buf;
    }
    f << ',' << r.label << '\n';
  }
  if (!f) throw DataError("write failed for " + path.string());
}

std::vector<FeatureRow> read_features_csv(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open " + path.string());
  std::string line;
  if (!std::getline(f, line) || line.rfind("roi_id,f0,", 0) != 0) {
    throw DataError(path.string() + ": missing features header");
  }
  std::vector<FeatureRow> rows;
  std::size_t lineno = 1;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    const auto where = path.string() + ":" + std::to_string(lineno);
    if (cells.size() != kFeatureDim + 2) {
      throw DataError(where + ": expected " + std::to_string(kFeatureDim + 2) + " columns, got " +
                      std::to_string(cells.size()));
    }
    FeatureRow r;
    r.roi_id = cells[0];
    try {
      for (std::size_t i = 0; i < kFeatureDim; ++i) r.values[i] = std::stod(cells[i + 1]);
      r.label = std::stoi(cells.back());
    } catch (const std::exception&) {
      throw DataError(where + ": non-numeric feature value");
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace ynet::diagnosis
