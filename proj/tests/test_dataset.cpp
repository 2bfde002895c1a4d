#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "fixtures.hpp"

using namespace dgforge;
namespace fs = std::filesystem;

namespace {

RunConfig tiny_config() {
  RunConfig c;
  c.seed = 4;
  c.toy.num_objects = 4;
  c.toy.grasps_per_object = 2;
  c.toy.attempts_per_grasp = 3;
  c.toy.opt_steps = 20;
  c.toy.test_fraction = 0.25;
  c.objects.cloud_points = 512;
  c.objects.loss_points = 256;
  return c;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("dgforge_test_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::vector<ToyObjectResult> generate(const RunConfig& c, const KinematicHandModel& model) {
  std::vector<ToyObjectResult> out;
  for (int i = 0; i < c.toy.num_objects; ++i) out.push_back(generate_toy_object(i, c, model, c.seed));
  return out;
}

}  // namespace

TEST(ToyObjects, DeterministicAndInRange) {
  const ToyConfig tc;
  for (int i = 0; i < 30; ++i) {
    const ObjectSpec a = make_toy_object(i, tc, 9), b = make_toy_object(i, tc, 9);
    EXPECT_EQ(a.id, b.id);
    EXPECT_EQ(a.size, b.size);
    EXPECT_TRUE(a.split == "train" || a.split == "test");
    EXPECT_EQ(a.split, split_for(a.id, tc.test_fraction));
    EXPECT_GT(support_distance(a, Vec3::UnitX()), 0.0);
  }
  EXPECT_EQ(split_for("anything", 0.0), "train");
  EXPECT_EQ(split_for("anything", 1.0), "test");
}

TEST(ToyObjects, SdfSignConvention) {
  for (const auto& o : {fixture::sphere_spec(), fixture::box_spec(), fixture::cylinder_spec()}) {
    EXPECT_LT(object_sdf(o, Vec3::Zero()), 0.0);
    EXPECT_GT(object_sdf(o, Vec3(0.2, 0, 0)), 0.0);
  }
  EXPECT_NEAR(object_sdf(fixture::sphere_spec(0.03), Vec3(0.05, 0, 0)), 0.02, 1e-12);
}

TEST(ToyGrasps, PassTheFilter) {
  const RunConfig c = tiny_config();
  const auto model = default_hand(c.hand);
  const auto objs = generate(c, model);
  std::size_t total = 0;
  for (const auto& o : objs) {
    if (o.spec.split == "test") EXPECT_TRUE(o.grasps.empty());
    for (const auto& g : o.grasps) {
      const auto asset = ObjectAsset::make(o.spec.id, o.mesh, c.objects);
      EXPECT_TRUE(filter_grasp(HandPose(g.pose), model, *asset->index, c.eval).first);
      ++total;
    }
  }
  EXPECT_GT(total, 0u);
}

TEST(Dataset, WriteReadRoundTripIsByteStable) {
  const RunConfig c = tiny_config();
  const auto model = default_hand(c.hand);
  const auto objs = generate(c, model);
  const fs::path a = scratch("ds_a"), b = scratch("ds_b");
  write_dataset(a, objs, to_json(c));
  write_dataset(b, generate(c, model), to_json(c));
  EXPECT_EQ(slurp(a / "manifest.json"), slurp(b / "manifest.json"));
  EXPECT_EQ(slurp(a / "grasps.jsonl"), slurp(b / "grasps.jsonl"));

  const Dataset d = read_dataset(a, model.pose_dim());
  ASSERT_EQ(d.objects.size(), objs.size());
  std::size_t k = 0;
  for (const auto& o : objs)
    for (const auto& g : o.grasps) {
      ASSERT_LT(k, d.records.size());
      EXPECT_EQ(d.records[k].object_id, g.object_id);
      EXPECT_EQ(d.records[k].pose, g.pose);  // exact decimal round trip
      ++k;
    }
  EXPECT_EQ(k, d.records.size());
  const auto assets = load_objects(d, c.objects, {objs[0].spec.id, "no_such_object"});
  EXPECT_EQ(assets.size(), 1u);
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Dataset, CorruptRecordNamesTheLine) {
  const RunConfig c = tiny_config();
  const auto model = default_hand(c.hand);
  const fs::path dir = scratch("ds_corrupt");
  write_dataset(dir, generate(c, model), to_json(c));
  std::string text = slurp(dir / "grasps.jsonl");
  const auto first_nl = text.find('\n');
  ASSERT_NE(first_nl, std::string::npos);
  ASSERT_LT(first_nl + 10, text.size());
  text[first_nl + 10] = text[first_nl + 10] == '1' ? '2' : '1';
  std::ofstream(dir / "grasps.jsonl", std::ios::binary) << text;
  try {
    read_dataset(dir, model.pose_dim());
    FAIL() << "corrupt record accepted";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("grasps.jsonl:2"), std::string::npos) << e.what();
  }
  fs::remove_all(dir);
}

TEST(Dataset, MeshTamperingDetected) {
  RunConfig c = tiny_config();
  c.toy.grasps_per_object = 0;
  const auto model = default_hand(c.hand);
  const fs::path dir = scratch("ds_mesh");
  const auto objs = generate(c, model);
  write_dataset(dir, objs, to_json(c));
  std::ofstream(dir / "objects" / (objs[0].spec.id + ".ply"), std::ios::app) << "\n";
  EXPECT_THROW(read_dataset(dir), ValidationError);
  fs::remove_all(dir);
}

TEST(Dataset, EmptyDataset) {
  const fs::path dir = scratch("ds_empty");
  write_dataset(dir, {}, Json::object());
  const Dataset d = read_dataset(dir);
  EXPECT_TRUE(d.objects.empty());
  EXPECT_TRUE(d.records.empty());
  EXPECT_THROW(read_dataset(dir / "missing"), ValidationError);
  fs::remove_all(dir);
}

TEST(Dataset, RecordValidation) {
  const Json ok = {{"object_id", "x"}, {"pose", std::vector<double>(33, 0.0)}, {"split", "train"}, {"provenance", "p"}};
  EXPECT_NO_THROW(record_from_json(ok, "f:1", 33));
  EXPECT_THROW(record_from_json(ok, "f:1", 34), ValidationError);
  Json bad = ok;
  bad["pose"][3] = "nan";
  EXPECT_THROW(record_from_json(bad, "f:1", 33), ValidationError);
}
