#include <iostream>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "CLI11.hpp"
#include "varigan/data/dataset.hpp"
#include "varigan/metrics/classifier.hpp"

// Fits the shape classifier the eval command scores generations with. Kept
// out of the main binary so the fixture can be retrained without touching
// pipeline checkpoints.
int main(int argc, char** argv) {
  CLI::App app{"train the shape classifier on a rendered dataset"};
  std::string data, out;
  std::size_t epochs = 30, batch = 16;
  std::uint64_t seed = 7;
  double lr = 1e-3;
  app.add_option("--data", data, "dataset directory")->required();
  app.add_option("--out", out, "weights output path")->required();
  app.add_option("--epochs", epochs, "training epochs");
  app.add_option("--batch", batch, "minibatch size");
  app.add_option("--lr", lr, "learning rate");
  app.add_option("--seed", seed, "init/shuffle seed");
  CLI11_PARSE(app, argc, argv);

  try {
    varigan::LoadResult loaded = varigan::load_grouped_dataset(data);
    std::vector<varigan::Tensor> images;
    std::vector<std::size_t> labels;
    for (const varigan::ImageGroup& g : loaded.groups) {
      auto it = g.metadata.find("shape_class");
      if (it == g.metadata.end()) continue;
      const std::size_t label = std::stoul(it->second);
      for (const auto& [view, path] : g.views) {
        images.push_back(varigan::load_image(path));
        labels.push_back(label);
      }
    }
    if (images.empty()) {
      std::cerr << "no labeled groups under " << data << "\n";
      return 1;
    }

    varigan::ShapeClassifier cls(seed);
    const double loss = cls.fit(images, labels, epochs, batch, lr, seed + 1);
    const double acc = cls.accuracy(images, labels);
    cls.save(out);
    std::cout << fmt::format("trained on {} images: loss {:.4f}, accuracy {:.3f}, saved {}\n",
                             images.size(), loss, acc, out);
    return acc >= 0.5 ? 0 : 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
