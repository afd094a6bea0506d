#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "lastmile/geo.hpp"
#include "lastmile/ingest.hpp"
#include "lastmile/matrix.hpp"

namespace lastmile {
class Rng;
}

namespace lastmile::embed {

// Number of cells in a patch of radius R, and the ring a spiral index sits on.
std::size_t patch_size(int radius);
int ring_of_index(std::size_t index);

// One training example: the tag counts of a cell and its k-ring neighbourhood
// in spiral order. Missing neighbours are zero-filled and masked out.
struct HexPatch {
	geo::HexCellId center;
	int radius = 0;
	std::size_t n_tags = 0;
	std::vector<double> values;        // P x T encoder inputs (log1p when scaled)
	std::vector<std::uint32_t> counts; // P x T raw counts (reconstruction targets)
	std::vector<std::uint8_t> mask;    // P; 1 = cell present in the matrix
	bool log1p_scaled = true;

	double value(std::size_t pos, std::size_t tag) const {
		return values[pos * n_tags + tag];
	}
	std::uint32_t count(std::size_t pos, std::size_t tag) const {
		return counts[pos * n_tags + tag];
	}
};

HexPatch build_patch(const ingest::RegionFeatureMatrix& m, const geo::HexCellId& center,
					 int radius = 3, bool log1p_scale = true);

// Distance decay of the reconstruction loss: proportional to 1/(1+d),
// normalized so the weights of one full patch sum to 1.
double location_weight(int ring, int radius);

// Zero-inflated Poisson negative log-likelihood of count x under mixing
// logit `logit_pi` and log-intensity `log_lambda` (clamped to +/-30).
double zip_nll(double logit_pi, double log_lambda, std::uint32_t x);

struct ZipGrad {
	double nll = 0.0;
	double d_logit_pi = 0.0;
	double d_log_lambda = 0.0;
};
ZipGrad zip_nll_grad(double logit_pi, double log_lambda, std::uint32_t x);

struct EncoderConfig {
	int radius = 3;
	std::size_t n_tags = 0;
	std::size_t conv_width = 128;
	std::size_t hidden_width = 128;
	std::size_t bottleneck = 50;
	bool log1p_inputs = true;

	std::size_t n_rings() const { return static_cast<std::size_t>(radius) + 1; }
	void validate() const;
};

// Autoencoder parameters in one flat vector. Encoder: ring-shared hex
// convolution -> dense hidden -> linear bottleneck; decoder mirrors it and
// ends in ring-shared two-head readouts (logit_pi, log_lambda) per tag.
class EncoderParams {
public:
	EncoderParams() = default;
	EncoderParams(const EncoderConfig& cfg, std::uint64_t seed);

	const EncoderConfig& config() const { return cfg_; }
	std::size_t n_params() const { return theta_.size(); }
	std::vector<double>& theta() { return theta_; }
	const std::vector<double>& theta() const { return theta_; }

	// Block offsets into theta(); exposed for the numeric code and tests.
	struct Layout {
		std::size_t w_conv, b_conv;   // [rings][conv][tags], [conv]
		std::size_t w_hid, b_hid;     // [hidden][conv], [hidden]
		std::size_t w_bot, b_bot;     // [bottleneck][hidden], [bottleneck]
		std::size_t w_dhid, b_dhid;   // [hidden][bottleneck], [hidden]
		std::size_t w_dconv, b_dconv; // [conv][hidden], [conv]
		std::size_t w_head, b_head;   // [rings][2*tags][conv], [rings][2*tags]
		std::size_t total;
	};
	const Layout& layout() const { return layout_; }

	void save(const std::string& path) const;
	static EncoderParams load(const std::string& path);

private:
	EncoderConfig cfg_;
	Layout layout_{};
	std::vector<double> theta_;
};

struct ForwardResult {
	std::vector<double> embedding;  // bottleneck activations
	double loss = 0.0;              // location-weighted ZIP NLL of the patch
};

ForwardResult forward(const EncoderParams& params, const HexPatch& patch);

// Loss plus gradient w.r.t. every parameter (accumulated into `grad`, which
// must be zero-initialized by the caller to params.n_params()). When
// `input_grad` is non-null it receives dLoss/d(values), same shape as
// patch.values.
double loss_and_grad(const EncoderParams& params, const HexPatch& patch,
					 std::vector<double>& grad, std::vector<double>* input_grad = nullptr);

struct TrainConfig {
	std::size_t epochs = 30;
	double learning_rate = 1e-3;
	std::size_t batch_size = 32;
	double momentum = 0.9;
	std::uint64_t seed = 1;
};

// Mini-batch SGD with momentum; deterministic in cfg.seed. Returns the mean
// per-patch loss of each epoch (measured during the pass).
std::vector<double> train(EncoderParams& params, const std::vector<HexPatch>& patches,
						  const TrainConfig& cfg);

struct EmbeddingMatrix {
	std::vector<geo::HexCellId> cells;
	Matrix values;  // |cells| x bottleneck

	std::optional<std::size_t> row_of(const geo::HexCellId& cell) const;
	void rebuild_index();

private:
	std::unordered_map<geo::HexCellId, std::size_t> row_index_;
};

EmbeddingMatrix embed_cells(const EncoderParams& params,
							const ingest::RegionFeatureMatrix& m);

void write_embeddings_csv(const std::string& path, const EmbeddingMatrix& emb);
EmbeddingMatrix read_embeddings_csv(const std::string& path, const std::string& city_id);

struct GradCheckResult {
	double max_rel_err = 0.0;
	double max_abs_err = 0.0;
	std::size_t n_params = 0;
};

// Central finite differences over every parameter against the analytic
// gradient of the summed patch loss.
GradCheckResult grad_check(const EncoderParams& params,
						   const std::vector<HexPatch>& patches, double eps = 1e-4);

}  // namespace lastmile::embed
