// Writes the synthetic cuboid episodes used by the tests and the demo.

#include <iostream>

#include "CLI11.hpp"
#include "embforge/fixture.hpp"

int main(int argc, char** argv) {
  CLI::App app{"make_fixture: write synthetic RGB-D cuboid episodes"};
  std::string out;
  embforge::fixture::Options opts;
  app.add_option("--out", out, "Output directory")->required();
  app.add_option("--episodes", opts.episodes, "Number of episodes")->capture_default_str();
  app.add_option("--frames", opts.frames, "Frames per episode (>= 6)")->capture_default_str();
  app.add_option("--width", opts.width, "Image width")->capture_default_str();
  app.add_option("--height", opts.height, "Image height")->capture_default_str();
  app.add_option("--seed", opts.seed, "Seed")->capture_default_str();
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }
  try {
    const auto manifests = embforge::fixture::write_fixture(out, opts);
    std::cerr << "wrote " << manifests.size() << " episodes to " << out << "\n";
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
