#ifndef STYLECLOAK_DEFAULTS_HPP
#define STYLECLOAK_DEFAULTS_HPP

#include <array>
#include <string_view>

namespace stylecloak::defaults {

// Values taken from the published mimicry/cloaking setup.
inline constexpr double kBudget = 0.05;             // perceptual budget p
inline constexpr int kCloakSteps = 500;             // Adam steps per cloak
inline constexpr int kFineTuneSteps = 3000;         // mimic fine-tuning steps
inline constexpr double kTrainFraction = 0.8;       // 80/20 train/test split
inline constexpr int kSeedsPerCaption = 5;          // generations per held-out caption
inline constexpr int kTopK = 3;                     // genre-shift uses top-3 genres
inline constexpr int kSeedRobustnessSeeds = 100;    // seeds in the robustness analysis
inline constexpr double kPercentileLo = 0.5;        // target band lower percentile
inline constexpr double kPercentileHi = 0.75;       // target band upper percentile
inline constexpr double kSdLearningRate = 5e-6;     // passthrough for a diffusion adapter
inline constexpr int kSdBatchSize = 32;             // passthrough for a diffusion adapter
inline constexpr int kSdSamplingSteps = 50;         // passthrough (PNDM sampler)
inline constexpr std::array<double, 3> kBudgetLadder{0.05, 0.1, 0.2};
inline constexpr std::array<double, 4> kBudgetSweep{0.02, 0.05, 0.1, 0.2};
inline constexpr std::array<double, 4> kCloakFractions{1.0, 0.5, 0.25, 0.0};

// Toolkit choices where the published setup is silent.
inline constexpr double kPenaltyWeight = 200.0;     // alpha
inline constexpr double kCloakLearningRate = 0.01;
inline constexpr double kBudgetSlack = 0.1;         // accepted overshoot, fraction of p
inline constexpr int kExemplarsPerCandidate = 10;
inline constexpr double kToyLearningRate = 1e-2;    // toy generator fine-tune rate
inline constexpr double kBilateralSpatialSigma = 3.0;
inline constexpr double kBilateralRangeSigma = 0.1;
inline constexpr int kPreviewSteps = 100;           // service preview optimisation
inline constexpr double kMaxServiceBudget = 0.5;
inline constexpr std::string_view kGenrePromptTemplate = "an artwork in the style of {genre}";
inline constexpr std::string_view kCaptionTemplate = "an artwork titled {id}";

}  // namespace stylecloak::defaults

#endif  // STYLECLOAK_DEFAULTS_HPP
