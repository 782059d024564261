#include <gtest/gtest.h>

#include <fstream>
#include <map>
#include <sstream>

#include "oracles.hpp"
#include "ross/data.hpp"
#include "ross/hash.hpp"

using namespace ross;
namespace fs = std::filesystem;

namespace {

std::map<std::string, std::string> tree_hashes(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = hash_file(e.path());
  return out;
}

void write_text(const fs::path& p, const std::string& text) { std::ofstream(p, std::ios::binary) << text; }

}  // namespace

TEST(Generator, CountsSplitAndClasses) {
  oracle::TempDir dir("gen_counts");
  generate_shapes_dataset(dir.path, 10, 100, 64, 7);
  const auto m = load_manifest(dir.path / "manifest.csv");
  ASSERT_EQ(m.entries.size(), 1000u);
  EXPECT_EQ(m.image_size, 64);
  std::map<int, std::array<int, 2>> per;
  for (const auto& e : m.entries) ++per[e.label][e.split == Split::Train ? 0 : 1];
  ASSERT_EQ(per.size(), 10u);
  int train = 0;
  for (const auto& [label, c] : per) {
    EXPECT_EQ(c[0] + c[1], 100) << "class " << label;
    EXPECT_EQ(c[0], 80);
    train += c[0];
  }
  EXPECT_EQ(train, 800);
  std::set<std::pair<int, int>> combos;
  for (int c = 0; c < 10; ++c) combos.insert({shape_class(c).shape, shape_class(c).texture});
  EXPECT_EQ(combos.size(), 10u);
  std::set<std::string> names(m.class_names.begin(), m.class_names.end());
  EXPECT_EQ(names.size(), 10u);
}

TEST(Generator, SameSeedIsByteIdentical) {
  oracle::TempDir a("gen_a"), b("gen_b"), c("gen_c");
  generate_shapes_dataset(a.path, 5, 20, 32, 11);
  generate_shapes_dataset(b.path, 5, 20, 32, 11);
  generate_shapes_dataset(c.path, 5, 20, 32, 12);
  const auto ha = tree_hashes(a.path);
  EXPECT_EQ(ha.size(), 5u * 20 * 4 + 2);  // image, mask, two sidecars; manifest, meta
  EXPECT_EQ(ha, tree_hashes(b.path));
  EXPECT_NE(ha, tree_hashes(c.path));
}

TEST(Generator, MasksAreExactAndNonEmpty) {
  oracle::TempDir dir("gen_mask");
  generate_shapes_dataset(dir.path, 20, 20, 32, 3);
  const auto recs = load_records(load_manifest(dir.path / "manifest.csv"));
  ASSERT_EQ(recs.size(), 400u);
  for (const auto& r : recs) {
    ASSERT_FALSE(r.mask.empty()) << r.path;
    EXPECT_EQ(r.mask.height(), r.image.height);
    long fg = 0;
    for (auto v : r.mask.values()) fg += v ? 1 : 0;
    EXPECT_GT(fg, 0) << r.path;
    EXPECT_LT(fg, static_cast<long>(r.mask.size())) << r.path;
    // thresholding the stored mask recovers it exactly
    const auto stored = io::read_map(dir.path / "masks" / fs::path(r.path).filename());
    EXPECT_EQ(binarize(stored, 0.5), r.mask);
  }
}

TEST(Generator, RejectsBadArguments) {
  oracle::TempDir dir("gen_bad");
  EXPECT_THROW(generate_shapes_dataset(dir.path, 21, 20, 32, 0), InvalidArgument);
  EXPECT_THROW(generate_shapes_dataset(dir.path, 3, 20, 32, 0), InvalidArgument);
  EXPECT_THROW(generate_shapes_dataset(dir.path, 4, 19, 32, 0), InvalidArgument);
  EXPECT_THROW(generate_shapes_dataset(dir.path, 4, 20, 31, 0), InvalidArgument);
}

TEST(Manifest, EmptyFileNeedsHeader) {
  std::istringstream in("");
  EXPECT_THROW(parse_manifest(in, "."), ParseError);
}

TEST(Manifest, DuplicateNamesPath) {
  std::istringstream in("path,label,split\na.png,0,train\nb.png,1,test\na.png,0,test\n");
  try {
    parse_manifest(in, ".");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("a.png"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("line 4"), std::string::npos);
  }
}

TEST(Manifest, MalformedLinesReportLineNumber) {
  for (const std::string body : {"x.png,zero,train\n", "x.png,1\n", "x.png,1,val\n", "x.png,-1,train\n"}) {
    std::istringstream in("path,label,split\n" + body);
    try {
      parse_manifest(in, ".");
      FAIL() << body;
    } catch (const ParseError& e) {
      EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
    }
  }
}

TEST(Manifest, ThreeLinesInFileOrder) {
  oracle::TempDir dir("man3");
  FeatureBlock img(3, 32, 32);
  for (const char* n : {"c.png", "a.png", "b.png"}) io::write_rgb(dir.path / n, img);
  write_text(dir.path / "manifest.csv", "path,label,split\nc.png,1,train\na.png,0,test\nb.png,1,test\n");
  // class 0 lacks a train record
  EXPECT_THROW(load_manifest(dir.path / "manifest.csv"), InvalidArgument);
  write_text(dir.path / "manifest.csv", "path,label,split\nc.png,0,train\na.png,0,test\nb.png,0,test\n");
  const auto m = load_manifest(dir.path / "manifest.csv");
  const auto recs = load_records(m);
  ASSERT_EQ(recs.size(), 3u);
  EXPECT_EQ(recs[0].path, "c.png");
  EXPECT_EQ(recs[1].path, "a.png");
  EXPECT_EQ(recs[2].path, "b.png");
  EXPECT_EQ(recs[1].split, Split::Test);
}

TEST(Manifest, MissingFileIsNotFound) {
  oracle::TempDir dir("man_missing");
  write_text(dir.path / "manifest.csv", "path,label,split\nnope.png,0,train\n");
  EXPECT_THROW(load_manifest(dir.path / "manifest.csv"), NotFound);
  EXPECT_THROW(load_manifest(dir.path / "absent.csv"), NotFound);
}

TEST(Manifest, WrongImageSizeIsRejected) {
  oracle::TempDir dir("man_size");
  io::write_rgb(dir.path / "a.png", FeatureBlock(3, 32, 32));
  io::write_rgb(dir.path / "b.png", FeatureBlock(3, 16, 32));
  write_text(dir.path / "manifest.csv", "path,label,split\na.png,0,train\nb.png,0,test\n");
  EXPECT_THROW(load_records(load_manifest(dir.path / "manifest.csv")), InvalidArgument);
}

TEST(Partition, SelectsTaskClassesAndLogsAccess) {
  std::vector<SampleRecord> all(6);
  for (int i = 0; i < 6; ++i) {
    all[i].label = i % 3;
    all[i].split = i < 3 ? Split::Train : Split::Test;
  }
  AccessLog log;
  const auto p = make_partition(all, {0, 2}, Split::Train, &log);
  ASSERT_EQ(p.size(), 2u);
  EXPECT_EQ(p.at(0).label, 0);
  EXPECT_EQ(p.at(1).label, 2);
  EXPECT_EQ(log.labels, (std::vector<int>{0, 2}));
  EXPECT_THROW(p.at(2), std::out_of_range);
}
