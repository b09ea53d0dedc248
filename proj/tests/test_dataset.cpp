#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "graspcount/dataset.hpp"
#include "graspcount/errors.hpp"
#include "test_support.hpp"

using namespace graspcount;
using namespace graspcount::testing;

namespace {

std::filesystem::path scratch(const char* name) {
    const auto dir = std::filesystem::temp_directory_path() / "graspcount_dataset_test";
    std::filesystem::create_directories(dir);
    return dir / name;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::ostringstream s;
    s << f.rdbuf();
    return s.str();
}

}  // namespace

TEST_CASE("samples round-trip through JSON lines") {
    const auto d = small_dataset(10, 2, 4);
    const auto path = scratch("rt.jsonl");
    save_dataset(d, path);
    const auto back = load_dataset(path);
    CHECK(back.samples == d.samples);
    CHECK(back.meta.class_histogram == d.meta.class_histogram);
    CHECK(back.meta.splits.test == d.meta.splits.test);
    CHECK(back.meta.scales.tactile == d.meta.scales.tactile);
    CHECK(back.meta.pose_limits.distal_max == d.meta.pose_limits.distal_max);

    // writing again gives identical bytes
    const auto path2 = scratch("rt2.jsonl");
    save_dataset(back, path2);
    CHECK(slurp(path) == slurp(path2));
    CHECK(slurp(sidecar_path(path)) == slurp(sidecar_path(path2)));
}

TEST_CASE("every row is 106 features plus a label") {
    const auto d = small_dataset(5, 1, 4);
    for (const auto& s : d.samples) {
        CHECK(s.features().size() + 1 == kRecordDim);
        CHECK(kRecordDim == 107);
    }
    auto good = sample_to_json(d.samples[0]);
    CHECK(sample_from_json(good) == d.samples[0]);

    auto drop_tactile = nlohmann::json::parse(good);
    drop_tactile["tactile"].erase(drop_tactile["tactile"].begin());
    CHECK_THROWS_AS(sample_from_json(drop_tactile.dump()), FormatError);
    auto extra_strain = nlohmann::json::parse(good);
    extra_strain["strain"].push_back(0.1);
    CHECK_THROWS_AS(sample_from_json(extra_strain.dump()), FormatError);
    auto bad_label = nlohmann::json::parse(good);
    bad_label["label"] = 1.5;
    CHECK_THROWS_AS(sample_from_json(bad_label.dump()), FormatError);
    CHECK_THROWS_AS(sample_from_json("{"), FormatError);
}

TEST_CASE("broken files are data errors") {
    const auto d = small_dataset(5, 1, 4);
    const auto path = scratch("broken.jsonl");
    save_dataset(d, path);
    {
        std::ofstream f(path, std::ios::app);
        f << "{\"pose\":[1,2]}\n";
    }
    CHECK_THROWS_AS(load_dataset(path), FormatError);

    save_dataset(d, path);
    std::filesystem::remove(sidecar_path(path));
    CHECK_THROWS_AS(load_dataset(path), DataError);
    CHECK_THROWS_AS(load_dataset(scratch("missing.jsonl")), DataError);

    Dataset short_split = d;
    short_split.meta.splits.test.pop_back();
    save_dataset(short_split, path);
    CHECK_THROWS_AS(load_dataset(path), FormatError);
}

TEST_CASE("pose files") {
    const auto poses = dedupe_symmetric(pregrasp_grid());
    const std::vector<HandPose> some(poses.begin(), poses.begin() + 20);
    const auto path = scratch("poses.jsonl");
    save_poses(some, path);
    CHECK(load_poses(path) == some);
}
