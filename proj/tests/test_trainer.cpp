#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "okdad/checkpoint.hpp"
#include "okdad/metrics.hpp"
#include "okdad/runtime.hpp"
#include "okdad/trainer.hpp"

using namespace okdad;
using namespace okdad::trainer;

namespace fs = std::filesystem;

namespace {

synthvid::GeneratorConfig tiny_gen() {
  synthvid::GeneratorConfig g;
  g.num_classes = 3;
  g.frame_height = 24;
  g.frame_width = 24;
  g.min_clip_len = 10;
  g.max_clip_len = 18;
  g.gap_len_min = 8;
  g.gap_len_max = 14;
  g.seed = 7;
  return g;
}

nets::ModelConfig tiny_model(nets::ModelKind kind) {
  nets::ModelConfig m;
  m.kind = kind;
  m.num_classes = 3;
  m.backbone.in_t = kind == nets::ModelKind::teacher ? 6 : 3;
  m.backbone.in_h = 12;
  m.backbone.in_w = 12;
  m.backbone.feature_dim = 8;
  m.backbone.widths = {3, 6};
  m.backbone.spatial_strides = {1, 2};
  m.backbone.temporal_strides = {1, 2};
  m.class_hidden = 16;
  m.act_hidden = 8;
  m.t_off = 6;
  m.stride = 2;
  m.delta = 3;
  return m;
}

TrainConfig tiny_train(Stage stage) {
  TrainConfig c;
  c.stage = stage;
  c.batch_size = stage == Stage::teacher ? 8 : 6;
  c.learning_rate = 1e-3;
  c.epochs = 2;
  c.seed = 11;
  c.window_blocks = 6;
  c.model = tiny_model(stage == Stage::teacher
                           ? nets::ModelKind::teacher
                           : (stage == Stage::okdad ? nets::ModelKind::okdad
                                                    : nets::ModelKind::student));
  return c;
}

std::string temp_run(const char* tag) {
  auto p = fs::temp_directory_path() / (std::string("okdad_run_") + tag);
  fs::remove_all(p);
  return p.string();
}

bool same_file_bytes(const std::string& a, const std::string& b) {
  return checkpoint::file_hash(a) == checkpoint::file_hash(b);
}

}  // namespace

TEST_CASE("sample_training_ratio clipping distribution") {
  rng::Stream rs(5);
  int ones = 0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    double r = sample_training_ratio(rs, 0.025);
    CHECK(r >= 0.025);
    CHECK(r <= 1.0);
    ones += r == 1.0;
  }
  const double frac = (double)ones / n;
  CHECK(frac == doctest::Approx(1.0 / 1.975).epsilon(0.02));

  rng::Stream rs2(6);
  for (int i = 0; i < 100; ++i)
    CHECK(sample_training_ratio(rs2, 1.0) == 1.0);
}

TEST_CASE("adam updates only trainable parameters") {
  ad::Parameter a("a", Tensor({3}, 1.0));
  ad::Parameter b("b", Tensor({3}, 1.0));
  b.trainable = false;
  Adam adam(0.1, {&a});
  a.grad.data = {1.0, -2.0, 0.5};
  adam.step();
  CHECK(a.value[0] != 1.0);
  CHECK(b.value.data == std::vector<double>(3, 1.0));
}

TEST_CASE("teacher training: loss drops, checkpoints deterministic") {
  auto ds = synthvid::make_clip_dataset(tiny_gen(), 36, 9);
  auto cfg = tiny_train(Stage::teacher);
  cfg.epochs = 3;
  auto dir1 = temp_run("teach1");
  auto out1 = train_teacher(ds, cfg, dir1);
  CHECK(out1.steps > 0);
  CHECK(std::isfinite(out1.last_epoch_loss));
  CHECK(out1.last_epoch_loss < out1.first_epoch_loss);
  CHECK(fs::exists(out1.best_checkpoint));

  auto dir2 = temp_run("teach2");
  auto out2 = train_teacher(ds, cfg, dir2);
  CHECK(same_file_bytes(out1.best_checkpoint, out2.best_checkpoint));
  CHECK(same_file_bytes(dir1 + "/checkpoints/last.okc",
                        dir2 + "/checkpoints/last.okc"));
  fs::remove_all(dir1);
  fs::remove_all(dir2);
}

TEST_CASE("cache: determinism, bounds, full-horizon agreement, round-trip") {
  auto ds = synthvid::make_clip_dataset(tiny_gen(), 10, 4);
  auto tcfg = tiny_train(Stage::teacher);
  auto teacher = nets::Model::build(tcfg.model, 3);

  auto cache1 = build_teacher_cache(teacher, ds, 42);
  auto cache2 = build_teacher_cache(teacher, ds, 42);
  REQUIRE(cache1.clips.size() == ds.items.size());
  for (size_t i = 0; i < cache1.clips.size(); ++i) {
    REQUIRE(cache1.clips[i].x_p.size() == cache1.clips[i].epsilon.size());
    for (size_t t = 0; t < cache1.clips[i].x_p.size(); ++t) {
      CHECK(cache1.clips[i].x_p[t].data == cache2.clips[i].x_p[t].data);
      CHECK(cache1.clips[i].epsilon[t] >= 0.0);
      CHECK(cache1.clips[i].epsilon[t] <= 1.0);
    }
  }

  // at the last horizon the cached feature equals the whole-clip feature
  const auto& clip = ds.items[0];
  auto [full_feat, full_dist] = runtime::teacher_feature_at(
      teacher, clip.video, clip.video.num_frames());
  CHECK(cache1.clips[0].x_p.back().data == full_feat.data);

  auto path = temp_run("cachefile") + "/features.okf";
  save_cache(cache1, path);
  auto loaded = load_cache(path);
  CHECK(loaded.dataset_hash == cache1.dataset_hash);
  CHECK(loaded.stride == cache1.stride);
  REQUIRE(loaded.clips.size() == cache1.clips.size());
  for (size_t i = 0; i < loaded.clips.size(); ++i)
    for (size_t t = 0; t < loaded.clips[i].x_p.size(); ++t) {
      CHECK(loaded.clips[i].x_p[t].data == cache1.clips[i].x_p[t].data);
      CHECK(loaded.clips[i].epsilon[t] == cache1.clips[i].epsilon[t]);
    }
  fs::remove_all(fs::path(path).parent_path());
}

TEST_CASE("student training freezes the classifier and reuses the backbone") {
  auto ds = synthvid::make_clip_dataset(tiny_gen(), 24, 6);
  auto tcfg = tiny_train(Stage::teacher);
  auto dirt = temp_run("teach_for_student");
  auto tout = train_teacher(ds, tcfg, dirt);
  auto teacher = checkpoint::load_model(tout.best_checkpoint).model;

  auto cache = build_teacher_cache(teacher, ds, 1);
  auto scfg = tiny_train(Stage::student);
  scfg.epochs = 2;
  auto dirs = temp_run("student1");
  auto sout = train_student(ds, teacher, cache, scfg, dirs);
  CHECK(sout.steps > 0);

  auto student = checkpoint::load_model(sout.best_checkpoint).model;
  // classifier parameters bit-identical to the teacher's (frozen reuse)
  CHECK(student.cls_w->value.data == teacher.cls_w->value.data);
  CHECK(student.cls_b->value.data == teacher.cls_b->value.data);
  // backbone was fine-tuned away from the teacher's weights
  bool backbone_moved = false;
  for (const auto& p : student.store.params)
    if (p->name.rfind("backbone.", 0) == 0 &&
        p->value.data != teacher.store.find(p->name)->value.data)
      backbone_moved = true;
  CHECK(backbone_moved);

  // determinism
  auto dirs2 = temp_run("student2");
  auto sout2 = train_student(ds, teacher, cache, scfg, dirs2);
  CHECK(same_file_bytes(sout.best_checkpoint, sout2.best_checkpoint));

  // frozen randomly-initialized backbone baseline trains and keeps its
  // backbone bytes
  auto bcfg = scfg;
  bcfg.init_backbone_from_teacher = false;
  bcfg.freeze_backbone = true;
  auto dirb = temp_run("baseline");
  auto bout = train_student(ds, teacher, cache, bcfg, dirb);
  auto baseline = checkpoint::load_model(bout.best_checkpoint).model;
  auto fresh = nets::Model::build(bcfg.model, bcfg.seed);
  for (const auto& p : baseline.store.params)
    if (p->name.rfind("backbone.", 0) == 0)
      CHECK(p->value.data == fresh.store.find(p->name)->value.data);

  for (const auto& d : {dirt, dirs, dirs2, dirb}) fs::remove_all(d);
}

TEST_CASE("cache/dataset mismatch is rejected") {
  auto ds = synthvid::make_clip_dataset(tiny_gen(), 10, 4);
  auto tcfg = tiny_train(Stage::teacher);
  auto teacher = nets::Model::build(tcfg.model, 3);
  auto cache = build_teacher_cache(teacher, ds, 9);
  cache.clips.pop_back();  // wrong item count
  auto scfg = tiny_train(Stage::student);
  CHECK_THROWS_AS(
      (void)train_student(ds, teacher, cache, scfg, temp_run("mismatch")),
      std::runtime_error);
}

TEST_CASE("okdad training runs with both gating sources") {
  auto gen = tiny_gen();
  auto ds = synthvid::make_sequence_dataset(gen, 6, 2, 2);
  auto tcfg = tiny_train(Stage::teacher);
  auto teacher = nets::Model::build(tcfg.model, 3);
  auto cache = build_teacher_cache(teacher, ds, 17);

  auto ocfg = tiny_train(Stage::okdad);
  ocfg.epochs = 1;
  ocfg.batch_size = 3;
  auto dir1 = temp_run("okdad1");
  auto out1 = train_okdad(ds, teacher, cache, ocfg, dir1);
  CHECK(out1.steps > 0);
  CHECK(std::isfinite(out1.last_epoch_loss));

  ocfg.gating_source = GatingSource::predictions;
  auto dir2 = temp_run("okdad2");
  auto out2 = train_okdad(ds, teacher, cache, ocfg, dir2);
  CHECK(out2.steps > 0);
  CHECK(std::isfinite(out2.last_epoch_loss));

  // windows sampled over many draws hit both action and gap blocks
  const auto& seq = ds.items[0];
  auto labels = runtime::block_actionness_labels(
      seq.intervals, seq.video.num_frames(), ocfg.model.stride,
      ocfg.model.delta);
  bool has_action = false, has_gap = false;
  for (double l : labels) (l > 0.5 ? has_action : has_gap) = true;
  CHECK(has_action);
  CHECK(has_gap);

  fs::remove_all(dir1);
  fs::remove_all(dir2);
}
