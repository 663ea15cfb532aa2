#include "msnerf/config.hpp"

#include "msnerf/datagen.hpp"
#include "msnerf/trainer.hpp"

#include <gtest/gtest.h>

using namespace msnerf;

TEST(Config, ParsesSectionsAndTypes) {
  const Config c = Config::parse_string(
      "top = 1\n"
      "# comment\n"
      "; another\n"
      "[train]\n"
      "epochs = 12   # trailing\n"
      "lr0 = 2.5e-3\n"
      "stratified = false\n"
      "name = hello world\n"
      "[sphere]\n"
      "center = 0.1, -0.2 0.3\n"
      "[sphere]\n"
      "radius = 2\n");
  EXPECT_EQ(c.section("").get_int("top", 0), 1);
  const ConfigSection& t = c.section("train");
  EXPECT_EQ(t.get_int("epochs", 0), 12);
  EXPECT_DOUBLE_EQ(t.get_double("lr0", 0.0), 2.5e-3);
  EXPECT_FALSE(t.get_bool("stratified", true));
  EXPECT_EQ(t.get_string("name", ""), "hello world");
  EXPECT_EQ(t.get_int("missing", 7), 7);
  EXPECT_EQ(c.sections("sphere").size(), 2u);
  EXPECT_EQ(c.section("sphere").get_vec3("center", Vec3::Zero()), Vec3(0.1, -0.2, 0.3));
  EXPECT_FALSE(c.section("absent").has("x"));
}

TEST(Config, LaterEntriesOverride) {
  const Config c = Config::parse_string("[a]\nx = 1\nx = 2\n");
  EXPECT_EQ(c.section("a").get_int("x", 0), 2);
}

TEST(Config, SyntaxErrorsNameTheLine) {
  try {
    Config::parse_string("[a]\nok = 1\nbroken line\n", "test.cfg");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("test.cfg:3"), std::string::npos) << e.what();
  }
  EXPECT_THROW(Config::parse_string("[unterminated\n"), ConfigError);
  EXPECT_THROW(Config::parse_string("[]\n"), ConfigError);
  EXPECT_THROW(Config::parse_string("= 3\n"), ConfigError);
}

TEST(Config, BadValuesNameKeyAndValue) {
  const Config c = Config::parse_string("[a]\nn = 1.5\nb = maybe\nv = 1, 2\nd = x\n", "f.cfg");
  const ConfigSection& s = c.section("a");
  try {
    s.get_int("n", 0);
    FAIL();
  } catch (const ConfigError& e) {
    const std::string m = e.what();
    EXPECT_NE(m.find("f.cfg:2"), std::string::npos) << m;
    EXPECT_NE(m.find("'n'"), std::string::npos) << m;
    EXPECT_NE(m.find("1.5"), std::string::npos) << m;
  }
  EXPECT_THROW(s.get_bool("b", false), ConfigError);
  EXPECT_THROW(s.get_vec3("v", Vec3::Zero()), ConfigError);
  EXPECT_THROW(s.get_double("d", 0.0), ConfigError);
}

TEST(Config, UnknownKeysAndSectionsRejected) {
  const Config c = Config::parse_string("[a]\nx = 1\ntypo = 2\n[b]\n");
  c.section("a").get_int("x", 0);
  EXPECT_THROW(c.section("a").reject_unknown(), ConfigError);
  EXPECT_THROW(c.reject_unknown_sections({"a"}), ConfigError);
  EXPECT_NO_THROW(c.reject_unknown_sections({"a", "b", ""}));
}

TEST(Config, MissingFileThrows) {
  EXPECT_THROW(Config::load("/nonexistent/msnerf.cfg"), ConfigError);
}

TEST(Config, TrainConfigRoundTrip) {
  const Config c = Config::parse_string(
      "[train]\nrays_per_step = 64\nsamples_per_ray = 16\nepochs = 3\nholdout = left\n"
      "temporal_weight = 0.2\nprecision = double\n"
      "[field]\nhidden_layers = 2\nhidden_width = 32\nskip_layer = 0\n"
      "[encoding]\nl_pos = 6\n[interp]\ndeltas = 0.5\nflow = variational\n");
  const TrainConfig t = train_config_from(c);
  EXPECT_EQ(t.rays_per_step, 64);
  EXPECT_EQ(t.samples_per_ray, 16);
  EXPECT_EQ(t.epochs, 3);
  EXPECT_EQ(t.holdout_view, static_cast<int>(RigView::Left));
  EXPECT_DOUBLE_EQ(t.temporal_weight, 0.2);
  EXPECT_EQ(t.precision, Precision::Double);
  EXPECT_EQ(t.field.hidden_layers, 2);
  EXPECT_EQ(t.field.skip_layer, 0);
  EXPECT_EQ(t.field.encoding.l_pos, 6);
  EXPECT_EQ(t.interp.deltas, std::vector<double>{0.5});
  EXPECT_EQ(t.interp.method, FlowMethod::Variational);
}

TEST(Config, TrainConfigRejectsTypos) {
  EXPECT_THROW(train_config_from(Config::parse_string("[train]\nepochz = 3\n")), ConfigError);
  EXPECT_THROW(train_config_from(Config::parse_string("[trian]\nepochs = 3\n")), ConfigError);
  EXPECT_THROW(train_config_from(Config::parse_string("[train]\nrays_per_step = 0\n")),
               std::invalid_argument);
}

TEST(Config, SceneFromConfig) {
  const Config c = Config::parse_string(
      "[scene]\nprofile = desk\nframes = 4\n"
      "[sphere]\ncenter = 0 0 -3\nradius = 0.5\nalbedo = 1 0 0\n"
      "[plane]\npoint = 0 -1 0\nnormal = 0 1 0\n"
      "[mover]\nstart = -0.5 0 -2\nend = 0.5 0 -2\nradius = 0.2\n"
      "[perturb]\nenabled = true\nrotation_deg = 0.25\ntranslation_mm = 2\nseed = 9\n");
  const SceneSpec s = scene_from_config(c);
  EXPECT_EQ(s.width, 160);
  EXPECT_EQ(s.frames, 4);
  ASSERT_EQ(s.spheres.size(), 1u);
  EXPECT_EQ(s.spheres[0].material.albedo, Vec3(1, 0, 0));
  EXPECT_EQ(s.planes.size(), 1u);
  EXPECT_TRUE(s.boxes.empty());
  ASSERT_TRUE(s.mover.has_value());
  EXPECT_DOUBLE_EQ(s.mover->radius, 0.2);
  EXPECT_TRUE(s.perturbation.enabled);
  EXPECT_DOUBLE_EQ(s.perturbation.translation_m, 0.002);
  EXPECT_EQ(s.perturbation.seed, 9u);
}

TEST(Config, SceneDefaultsWithoutPrimitives) {
  const SceneSpec s = scene_from_config(Config::parse_string("[scene]\nwidth = 32\nheight = 24\n"));
  const SceneSpec d = default_scene();
  EXPECT_EQ(s.width, 32);
  EXPECT_EQ(s.spheres.size(), d.spheres.size());
  EXPECT_TRUE(s.mover.has_value());
}

TEST(Config, SceneRejectsTyposAndBadValues) {
  EXPECT_THROW(scene_from_config(Config::parse_string("[scene]\nwidht = 3\n")), ConfigError);
  EXPECT_THROW(scene_from_config(Config::parse_string("[spheer]\n")), ConfigError);
  EXPECT_THROW(scene_from_config(Config::parse_string("[sphere]\nradius = -1\n")),
               std::invalid_argument);
  EXPECT_THROW(scene_from_config(Config::parse_string("[scene]\nprofile = huge\n")),
               std::invalid_argument);
}
