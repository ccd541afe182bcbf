#include <gtest/gtest.h>

#include <cstring>

#include "gazemoe/checkpoint.hpp"
#include "gazemoe/error.hpp"
#include "test_util.hpp"

namespace gazemoe {
namespace {

struct Trained {
  DecoderConfig cfg = DecoderConfig::toy();
  SyntheticEncoder encoder{EncoderConfig{}, cfg.feature_dim, cfg.grid};
  std::vector<Sample> data = synthetic_dataset(6, 0.5, 1, encoder);
  GazeMoE model{cfg, 2};
  AdamState adam;

  Trained() {
    TrainConfig t;
    t.aug = AugConfig::none();
    t.batch_size = 3;
    t.epochs = 1;
    train_loop(model, data, t, adam);
  }
};

TEST(Checkpoint, BytesRoundTripExactly) {
  Trained t;
  const Checkpoint c = make_checkpoint(t.model, &t.adam, Json{{"note", "x"}});
  const std::string bytes = encode_checkpoint(c);
  EXPECT_EQ(bytes.substr(0, 4), "GMOE");
  const Checkpoint back = decode_checkpoint(bytes);
  EXPECT_EQ(back.config, c.config);
  EXPECT_EQ(back.step, 2u);
  EXPECT_EQ(back.meta, c.meta);
  EXPECT_EQ(back.tensors, c.tensors);
  EXPECT_EQ(encode_checkpoint(back), bytes);
}

TEST(Checkpoint, FileRoundTripRestoresPredictionsAndOptimizer) {
  Trained t;
  const auto dir = testing::temp_dir("ckpt");
  const std::string path = (dir / "m.gmoe").string();
  save_checkpoint(path, make_checkpoint(t.model, &t.adam));
  const Checkpoint c = load_checkpoint(path);
  const GazeMoE restored = restore_model(c);
  for (const auto& s : t.data) {
    const GazePrediction a = t.model.predict(s.features, s.record.bbox);
    const GazePrediction b = restored.predict(s.features, s.record.bbox);
    EXPECT_EQ(a.heatmap, b.heatmap);
    EXPECT_EQ(a.in_frame_prob, b.in_frame_prob);
  }
  EXPECT_EQ(restore_adam(c), t.adam);
  EXPECT_THROW(load_checkpoint((dir / "missing.gmoe").string()), IoError);
}

TEST(Checkpoint, WithoutOptimizerState) {
  const GazeMoE model(DecoderConfig::toy(), 0);
  const Checkpoint c = make_checkpoint(model);
  EXPECT_EQ(c.tensors.size(), model.params().size());
  const AdamState a = restore_adam(decode_checkpoint(encode_checkpoint(c)));
  EXPECT_EQ(a.step, 0u);
  EXPECT_TRUE(a.moments.empty());
}

TEST(Checkpoint, CorruptBytesAreParseErrors) {
  const std::string bytes = encode_checkpoint(make_checkpoint(GazeMoE(DecoderConfig::toy(), 0)));
  std::string bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(decode_checkpoint(bad), ParseError);
  EXPECT_THROW(decode_checkpoint(bytes + "z"), ParseError);
  EXPECT_THROW(decode_checkpoint(bytes.substr(0, bytes.size() - 1)), ParseError);
  bad = bytes;
  bad[4] = 9;
  EXPECT_THROW(decode_checkpoint(bad), ParseError);
}

TEST(Checkpoint, ShapeMismatchAndMissingTensorAreConfigErrors) {
  Checkpoint c = make_checkpoint(GazeMoE(DecoderConfig::toy(), 0));
  Checkpoint wrong = c;
  wrong.tensors[0].shape = {wrong.tensors[0].data.size()};
  try {
    restore_model(wrong);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find(c.tensors[0].name), std::string::npos);
  }
  Checkpoint missing = c;
  missing.tensors.pop_back();
  EXPECT_THROW(restore_model(missing), ConfigError);
}

}  // namespace
}  // namespace gazemoe
