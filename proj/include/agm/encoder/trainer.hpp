// trainer.hpp
//
// Contrastive fine-tuning of the toy dual encoder. TrainConfig defaults are the
// full-scale CLIP fine-tuning values (batch 64, lr 1e-5, 50 epochs, Adam
// (0.9, 0.98), weight decay 0.01); desk-scale runs override batch/lr/epochs.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "agm/encoder/dual_encoder.hpp"
#include "agm/image.hpp"
#include "agm/nn/tensor.hpp"

namespace agm::encoder
{

struct ContrastiveResult
{
    double loss = 0.0;
    nn::Tensor grad_image;  ///< N x D, d loss / d E_V
    nn::Tensor grad_text;   ///< N x D, d loss / d E_T
};

/// Symmetric cross-entropy over logits E_V E_T^T / tau with the diagonal as
/// positives; the mean of the image->text and text->image directions.
/// Inputs are N x D rows of normalized embeddings. Throws ValueError for
/// tau <= 0, DimensionError for mismatched or empty inputs.
ContrastiveResult contrastive_loss(const nn::Tensor& image_embeddings, const nn::Tensor& text_embeddings,
                                   double temperature);

struct TrainConfig
{
    std::size_t batch_size = 64;
    double learning_rate = 1e-5;
    std::size_t epochs = 50;
    double beta1 = 0.9;
    double beta2 = 0.98;
    double eps = 1e-8;
    double weight_decay = 0.01;
    double temperature = 0.07;
    std::uint64_t seed = 0;
    bool drop_incomplete = false;
    ImageEncoderConfig image;
    TextEncoderConfig text;
};

struct TrainSample
{
    Image image;
    std::string caption;
};

struct TrainResult
{
    DualEncoder model;
    /// epoch_loss[0] is the loss before any update; epoch_loss[e] after epoch e.
    std::vector<double> epoch_loss;
};

using EpochCallback = std::function<void(std::size_t epoch, double loss)>;

/// Mean contrastive loss over consecutive batches in dataset order.
double dataset_loss(const DualEncoder& model, std::span<const TrainSample> samples, std::size_t batch_size);

/// Single-threaded, deterministic for a fixed config (including seed).
/// The vocabulary is built from the sample captions.
TrainResult train(std::span<const TrainSample> samples, const TrainConfig& cfg, const EpochCallback& on_epoch = {});

/// Loads the train split of a manifest, trains, writes the checkpoint.
TrainResult train_from_manifest(const std::filesystem::path& manifest, const TrainConfig& cfg,
                                const std::filesystem::path& checkpoint, const EpochCallback& on_epoch = {});

}  // namespace agm::encoder
