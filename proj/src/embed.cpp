#include "lastmile/embed.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "lastmile/rng.hpp"

using nlohmann::json;
using nlohmann::ordered_json;

namespace lastmile::embed {

namespace {

constexpr double kClamp = 30.0;  // log-intensity and logit clamp

double softplus(double v) {
	if (v > kClamp) return v;
	return std::log1p(std::exp(v));
}

double sigmoid(double v) {
	if (v >= 0.0) {
		const double e = std::exp(-v);
		return 1.0 / (1.0 + e);
	}
	const double e = std::exp(v);
	return e / (1.0 + e);
}

double tanh_d(double a) { return 1.0 - a * a; }  // derivative from the activation

// Scratch buffers for one forward/backward pass; sized once per config.
struct Workspace {
	std::vector<double> u;        // rings x tags, ring-aggregated inputs
	std::vector<double> a_conv;   // conv
	std::vector<double> a_hid;    // hidden
	std::vector<double> z;        // bottleneck
	std::vector<double> a_dhid;   // hidden
	std::vector<double> a_dconv;  // conv
	std::vector<double> heads;    // rings x 2*tags
	// backward
	std::vector<double> g_heads, g_dconv, g_dhid, g_z, g_hid, g_conv, g_u;

	explicit Workspace(const EncoderConfig& c)
		: u(c.n_rings() * c.n_tags),
		  a_conv(c.conv_width),
		  a_hid(c.hidden_width),
		  z(c.bottleneck),
		  a_dhid(c.hidden_width),
		  a_dconv(c.conv_width),
		  heads(c.n_rings() * 2 * c.n_tags),
		  g_heads(c.n_rings() * 2 * c.n_tags),
		  g_dconv(c.conv_width),
		  g_dhid(c.hidden_width),
		  g_z(c.bottleneck),
		  g_hid(c.hidden_width),
		  g_conv(c.conv_width),
		  g_u(c.n_rings() * c.n_tags) {}
};

// Dense forward y = tanh(W x + b) (or linear when `act` is false).
void dense(const double* w, const double* b, const double* x, std::size_t out_n,
		   std::size_t in_n, double* y, bool act) {
	for (std::size_t o = 0; o < out_n; ++o) {
		double s = b[o];
		const double* row = w + o * in_n;
		for (std::size_t i = 0; i < in_n; ++i) s += row[i] * x[i];
		y[o] = act ? std::tanh(s) : s;
	}
}

void forward_pass(const EncoderParams& p, const HexPatch& patch, Workspace& ws) {
	const EncoderConfig& c = p.config();
	const auto& L = p.layout();
	const double* th = p.theta().data();
	const std::size_t T = c.n_tags, C = c.conv_width, H = c.hidden_width,
					  B = c.bottleneck, R = c.n_rings();
	const std::size_t P = patch_size(c.radius);

	std::fill(ws.u.begin(), ws.u.end(), 0.0);
	for (std::size_t pos = 0; pos < P; ++pos) {
		if (!patch.mask[pos]) continue;
		const std::size_t d = static_cast<std::size_t>(ring_of_index(pos));
		const double* row = patch.values.data() + pos * T;
		double* u = ws.u.data() + d * T;
		for (std::size_t t = 0; t < T; ++t) u[t] += row[t];
	}

	// Hex convolution: one weight matrix per ring applied to that ring's sum.
	for (std::size_t ch = 0; ch < C; ++ch) {
		double s = th[L.b_conv + ch];
		for (std::size_t d = 0; d < R; ++d) {
			const double* w = th + L.w_conv + (d * C + ch) * T;
			const double* u = ws.u.data() + d * T;
			for (std::size_t t = 0; t < T; ++t) s += w[t] * u[t];
		}
		ws.a_conv[ch] = std::tanh(s);
	}

	dense(th + L.w_hid, th + L.b_hid, ws.a_conv.data(), H, C, ws.a_hid.data(), true);
	dense(th + L.w_bot, th + L.b_bot, ws.a_hid.data(), B, H, ws.z.data(), false);
	dense(th + L.w_dhid, th + L.b_dhid, ws.z.data(), H, B, ws.a_dhid.data(), true);
	dense(th + L.w_dconv, th + L.b_dconv, ws.a_dhid.data(), C, H, ws.a_dconv.data(), true);
	for (std::size_t d = 0; d < R; ++d)
		dense(th + L.w_head + d * 2 * T * C, th + L.b_head + d * 2 * T,
			  ws.a_dconv.data(), 2 * T, C, ws.heads.data() + d * 2 * T, false);
}

double patch_loss(const HexPatch& patch, const Workspace& ws, int radius,
				  std::vector<double>* g_heads) {
	const std::size_t T = patch.n_tags;
	const std::size_t P = patch_size(radius);
	double loss = 0.0;
	for (std::size_t pos = 0; pos < P; ++pos) {
		if (!patch.mask[pos]) continue;
		const int d = ring_of_index(pos);
		const double w = location_weight(d, radius);
		const double* o = ws.heads.data() + static_cast<std::size_t>(d) * 2 * T;
		for (std::size_t t = 0; t < T; ++t) {
			const std::uint32_t x = patch.counts[pos * T + t];
			if (g_heads) {
				const ZipGrad g = zip_nll_grad(o[2 * t], o[2 * t + 1], x);
				loss += w * g.nll;
				(*g_heads)[static_cast<std::size_t>(d) * 2 * T + 2 * t] += w * g.d_logit_pi;
				(*g_heads)[static_cast<std::size_t>(d) * 2 * T + 2 * t + 1] +=
					w * g.d_log_lambda;
			} else {
				loss += w * zip_nll(o[2 * t], o[2 * t + 1], x);
			}
		}
	}
	return loss;
}

void check_patch(const EncoderParams& p, const HexPatch& patch) {
	const EncoderConfig& c = p.config();
	if (patch.n_tags != c.n_tags)
		throw ShapeError("embed: patch has " + std::to_string(patch.n_tags) +
						 " tags, encoder expects " + std::to_string(c.n_tags));
	if (patch.radius != c.radius)
		throw ShapeError("embed: patch radius " + std::to_string(patch.radius) +
						 " != encoder radius " + std::to_string(c.radius));
	if (patch.log1p_scaled != c.log1p_inputs)
		throw ShapeError("embed: patch scaling does not match encoder config");
}

}  // namespace

std::size_t patch_size(int radius) {
	if (radius < 0) throw DomainError("patch_size: radius must be non-negative");
	return static_cast<std::size_t>(3 * radius * (radius + 1) + 1);
}

int ring_of_index(std::size_t index) {
	int ring = 0;
	std::size_t start = 0;
	while (index >= start + (ring == 0 ? 1 : static_cast<std::size_t>(6 * ring))) {
		start += ring == 0 ? 1 : static_cast<std::size_t>(6 * ring);
		++ring;
	}
	return ring;
}

HexPatch build_patch(const ingest::RegionFeatureMatrix& m, const geo::HexCellId& center,
					 int radius, bool log1p_scale) {
	if (center.city_id != m.tess.city_id)
		throw CityMismatchError("build_patch: cell city '" + center.city_id +
								"' != matrix city '" + m.tess.city_id + "'");
	const std::size_t T = m.vocab.size();
	const auto spiral = geo::k_ring(center, radius);

	HexPatch patch;
	patch.center = center;
	patch.radius = radius;
	patch.n_tags = T;
	patch.log1p_scaled = log1p_scale;
	patch.values.assign(spiral.size() * T, 0.0);
	patch.counts.assign(spiral.size() * T, 0);
	patch.mask.assign(spiral.size(), 0);

	for (std::size_t pos = 0; pos < spiral.size(); ++pos) {
		const auto row = m.row_of(spiral[pos]);
		if (!row) continue;
		patch.mask[pos] = 1;
		for (std::size_t t = 0; t < T; ++t) {
			const std::uint32_t x = m.count(*row, t);
			patch.counts[pos * T + t] = x;
			patch.values[pos * T + t] =
				log1p_scale ? std::log1p(static_cast<double>(x)) : static_cast<double>(x);
		}
	}
	return patch;
}

double location_weight(int ring, int radius) {
	if (radius < 0 || ring < 0 || ring > radius)
		throw DomainError("location_weight: need 0 <= ring <= radius");
	double z = 1.0;  // ring 0
	for (int d = 1; d <= radius; ++d) z += 6.0 * d / (1.0 + d);
	return (1.0 / (1.0 + ring)) / z;
}

double zip_nll(double logit_pi, double log_lambda, std::uint32_t x) {
	return zip_nll_grad(logit_pi, log_lambda, x).nll;
}

ZipGrad zip_nll_grad(double logit_pi, double log_lambda, std::uint32_t x) {
	if (!std::isfinite(logit_pi) || !std::isfinite(log_lambda))
		throw DomainError("zip_nll: parameters must be finite");
	const bool s_clamped = std::abs(log_lambda) > kClamp;
	const double s = std::clamp(log_lambda, -kClamp, kClamp);
	const double lambda = std::exp(s);

	ZipGrad g;
	if (x == 0) {
		// -log( pi + (1-pi) e^{-lambda} ) via log-sum-exp of
		// A = log pi, B = log(1-pi) - lambda.
		const double a = -softplus(-logit_pi);
		const double b = -softplus(logit_pi) - lambda;
		const double m = std::max(a, b);
		const double lse = m + std::log(std::exp(a - m) + std::exp(b - m));
		const double pa = std::exp(a - lse);
		const double pb = std::exp(b - lse);
		g.nll = -lse;
		g.d_logit_pi = -(pa * sigmoid(-logit_pi) - pb * sigmoid(logit_pi));
		g.d_log_lambda = s_clamped ? 0.0 : pb * lambda;
	} else {
		// -log( (1-pi) e^{-lambda} lambda^x / x! )
		const double xd = static_cast<double>(x);
		g.nll = softplus(logit_pi) - xd * s + lambda + std::lgamma(xd + 1.0);
		g.d_logit_pi = sigmoid(logit_pi);
		g.d_log_lambda = s_clamped ? 0.0 : lambda - xd;
	}
	return g;
}

void EncoderConfig::validate() const {
	if (radius < 1 || radius > 5)
		throw ConfigError("encoder: radius must be in [1, 5]");
	if (n_tags == 0) throw ConfigError("encoder: n_tags must be positive");
	if (conv_width == 0 || hidden_width == 0 || bottleneck == 0)
		throw ConfigError("encoder: layer widths must be positive");
}

EncoderParams::EncoderParams(const EncoderConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
	cfg_.validate();
	const std::size_t T = cfg.n_tags, C = cfg.conv_width, H = cfg.hidden_width,
					  B = cfg.bottleneck, R = cfg.n_rings();
	Layout& L = layout_;
	std::size_t off = 0;
	auto block = [&off](std::size_t n) {
		const std::size_t at = off;
		off += n;
		return at;
	};
	L.w_conv = block(R * C * T);
	L.b_conv = block(C);
	L.w_hid = block(H * C);
	L.b_hid = block(H);
	L.w_bot = block(B * H);
	L.b_bot = block(B);
	L.w_dhid = block(H * B);
	L.b_dhid = block(H);
	L.w_dconv = block(C * H);
	L.b_dconv = block(C);
	L.w_head = block(R * 2 * T * C);
	L.b_head = block(R * 2 * T);
	L.total = off;

	theta_.assign(L.total, 0.0);
	Rng rng(seed);
	const std::size_t P = patch_size(cfg.radius);
	auto glorot = [&](std::size_t at, std::size_t n, std::size_t fan_in,
					  std::size_t fan_out) {
		const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
		for (std::size_t i = 0; i < n; ++i) theta_[at + i] = rng.uniform(-a, a);
	};
	// The convolution sums the whole patch, so its effective fan-in is P*T.
	glorot(L.w_conv, R * C * T, P * T, C);
	glorot(L.w_hid, H * C, C, H);
	glorot(L.w_bot, B * H, H, B);
	glorot(L.w_dhid, H * B, B, H);
	glorot(L.w_dconv, C * H, H, C);
	glorot(L.w_head, R * 2 * T * C, C, 2 * T);
}

ForwardResult forward(const EncoderParams& params, const HexPatch& patch) {
	check_patch(params, patch);
	Workspace ws(params.config());
	forward_pass(params, patch, ws);
	const double loss = patch_loss(patch, ws, params.config().radius, nullptr);
	if (!std::isfinite(loss)) throw DivergenceError("embed: non-finite patch loss");
	return {ws.z, loss};
}

double loss_and_grad(const EncoderParams& p, const HexPatch& patch,
					 std::vector<double>& grad, std::vector<double>* input_grad) {
	check_patch(p, patch);
	if (grad.size() != p.n_params())
		throw ShapeError("loss_and_grad: grad buffer has wrong size");
	const EncoderConfig& c = p.config();
	const auto& L = p.layout();
	const double* th = p.theta().data();
	const std::size_t T = c.n_tags, C = c.conv_width, H = c.hidden_width,
					  B = c.bottleneck, R = c.n_rings();
	const std::size_t P = patch_size(c.radius);

	Workspace ws(c);
	forward_pass(p, patch, ws);
	std::fill(ws.g_heads.begin(), ws.g_heads.end(), 0.0);
	const double loss = patch_loss(patch, ws, c.radius, &ws.g_heads);

	// Heads -> decoder conv activation.
	std::fill(ws.g_dconv.begin(), ws.g_dconv.end(), 0.0);
	for (std::size_t d = 0; d < R; ++d) {
		const double* w = th + L.w_head + d * 2 * T * C;
		const double* go = ws.g_heads.data() + d * 2 * T;
		for (std::size_t o = 0; o < 2 * T; ++o) {
			if (go[o] == 0.0) continue;
			grad[L.b_head + d * 2 * T + o] += go[o];
			double* gw = grad.data() + L.w_head + (d * 2 * T + o) * C;
			const double* wr = w + o * C;
			for (std::size_t ch = 0; ch < C; ++ch) {
				gw[ch] += go[o] * ws.a_dconv[ch];
				ws.g_dconv[ch] += go[o] * wr[ch];
			}
		}
	}

	// Decoder conv (tanh) -> decoder hidden.
	std::fill(ws.g_dhid.begin(), ws.g_dhid.end(), 0.0);
	for (std::size_t ch = 0; ch < C; ++ch) {
		const double ds = ws.g_dconv[ch] * tanh_d(ws.a_dconv[ch]);
		if (ds == 0.0) continue;
		grad[L.b_dconv + ch] += ds;
		double* gw = grad.data() + L.w_dconv + ch * H;
		const double* wr = th + L.w_dconv + ch * H;
		for (std::size_t h = 0; h < H; ++h) {
			gw[h] += ds * ws.a_dhid[h];
			ws.g_dhid[h] += ds * wr[h];
		}
	}

	// Decoder hidden (tanh) -> bottleneck.
	std::fill(ws.g_z.begin(), ws.g_z.end(), 0.0);
	for (std::size_t h = 0; h < H; ++h) {
		const double ds = ws.g_dhid[h] * tanh_d(ws.a_dhid[h]);
		if (ds == 0.0) continue;
		grad[L.b_dhid + h] += ds;
		double* gw = grad.data() + L.w_dhid + h * B;
		const double* wr = th + L.w_dhid + h * B;
		for (std::size_t j = 0; j < B; ++j) {
			gw[j] += ds * ws.z[j];
			ws.g_z[j] += ds * wr[j];
		}
	}

	// Bottleneck (linear) -> encoder hidden.
	std::fill(ws.g_hid.begin(), ws.g_hid.end(), 0.0);
	for (std::size_t j = 0; j < B; ++j) {
		const double ds = ws.g_z[j];
		if (ds == 0.0) continue;
		grad[L.b_bot + j] += ds;
		double* gw = grad.data() + L.w_bot + j * H;
		const double* wr = th + L.w_bot + j * H;
		for (std::size_t h = 0; h < H; ++h) {
			gw[h] += ds * ws.a_hid[h];
			ws.g_hid[h] += ds * wr[h];
		}
	}

	// Encoder hidden (tanh) -> conv activation.
	std::fill(ws.g_conv.begin(), ws.g_conv.end(), 0.0);
	for (std::size_t h = 0; h < H; ++h) {
		const double ds = ws.g_hid[h] * tanh_d(ws.a_hid[h]);
		if (ds == 0.0) continue;
		grad[L.b_hid + h] += ds;
		double* gw = grad.data() + L.w_hid + h * C;
		const double* wr = th + L.w_hid + h * C;
		for (std::size_t ch = 0; ch < C; ++ch) {
			gw[ch] += ds * ws.a_conv[ch];
			ws.g_conv[ch] += ds * wr[ch];
		}
	}

	// Conv (tanh) -> ring sums and weights.
	std::fill(ws.g_u.begin(), ws.g_u.end(), 0.0);
	for (std::size_t ch = 0; ch < C; ++ch) {
		const double ds = ws.g_conv[ch] * tanh_d(ws.a_conv[ch]);
		if (ds == 0.0) continue;
		grad[L.b_conv + ch] += ds;
		for (std::size_t d = 0; d < R; ++d) {
			double* gw = grad.data() + L.w_conv + (d * C + ch) * T;
			const double* wr = th + L.w_conv + (d * C + ch) * T;
			const double* u = ws.u.data() + d * T;
			double* gu = ws.g_u.data() + d * T;
			for (std::size_t t = 0; t < T; ++t) {
				gw[t] += ds * u[t];
				gu[t] += ds * wr[t];
			}
		}
	}

	if (input_grad) {
		input_grad->assign(P * T, 0.0);
		for (std::size_t pos = 0; pos < P; ++pos) {
			if (!patch.mask[pos]) continue;  // masked inputs never reach the net
			const std::size_t d = static_cast<std::size_t>(ring_of_index(pos));
			const double* gu = ws.g_u.data() + d * T;
			double* gi = input_grad->data() + pos * T;
			for (std::size_t t = 0; t < T; ++t) gi[t] = gu[t];
		}
	}
	return loss;
}

std::vector<double> train(EncoderParams& params, const std::vector<HexPatch>& patches,
						  const TrainConfig& cfg) {
	if (patches.empty()) throw InsufficientDataError("embed::train: no patches");
	if (cfg.batch_size == 0) throw ConfigError("embed::train: batch_size must be positive");
	for (const auto& p : patches) check_patch(params, p);

	Rng rng(cfg.seed);
	std::vector<std::size_t> order(patches.size());
	std::iota(order.begin(), order.end(), std::size_t{0});

	std::vector<double> velocity(params.n_params(), 0.0);
	std::vector<double> grad(params.n_params(), 0.0);
	std::vector<double> curve;
	curve.reserve(cfg.epochs);

	for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
		rng.shuffle(order);
		double epoch_loss = 0.0;
		for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
			const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
			std::fill(grad.begin(), grad.end(), 0.0);
			double batch_loss = 0.0;
			for (std::size_t i = start; i < stop; ++i)
				batch_loss += loss_and_grad(params, patches[order[i]], grad);
			if (!std::isfinite(batch_loss))
				throw DivergenceError("embed::train: non-finite loss at epoch " +
									  std::to_string(epoch));
			epoch_loss += batch_loss;
			const double inv = 1.0 / static_cast<double>(stop - start);
			for (std::size_t k = 0; k < grad.size(); ++k) {
				velocity[k] = cfg.momentum * velocity[k] + grad[k] * inv;
				params.theta()[k] -= cfg.learning_rate * velocity[k];
			}
		}
		curve.push_back(epoch_loss / static_cast<double>(patches.size()));
	}
	return curve;
}

std::optional<std::size_t> EmbeddingMatrix::row_of(const geo::HexCellId& cell) const {
	auto it = row_index_.find(cell);
	if (it == row_index_.end()) return std::nullopt;
	return it->second;
}

void EmbeddingMatrix::rebuild_index() {
	row_index_.clear();
	for (std::size_t i = 0; i < cells.size(); ++i) row_index_[cells[i]] = i;
}

EmbeddingMatrix embed_cells(const EncoderParams& params,
							const ingest::RegionFeatureMatrix& m) {
	EmbeddingMatrix out;
	out.cells = m.cells;
	out.values = Matrix(m.cells.size(), params.config().bottleneck);
	for (std::size_t i = 0; i < m.cells.size(); ++i) {
		const HexPatch patch = build_patch(m, m.cells[i], params.config().radius,
										   params.config().log1p_inputs);
		const ForwardResult res = forward(params, patch);
		std::copy(res.embedding.begin(), res.embedding.end(), out.values.row(i));
	}
	out.rebuild_index();
	return out;
}

void write_embeddings_csv(const std::string& path, const EmbeddingMatrix& emb) {
	std::ofstream out(path, std::ios::binary);
	if (!out) throw ParseError("embeddings: cannot write '" + path + "'");
	out << "cell_q,cell_r";
	for (std::size_t j = 0; j < emb.values.cols; ++j) out << ",e" << j;
	out << "\n";
	char buf[32];
	for (std::size_t i = 0; i < emb.cells.size(); ++i) {
		out << emb.cells[i].q << ',' << emb.cells[i].r;
		for (std::size_t j = 0; j < emb.values.cols; ++j) {
			std::snprintf(buf, sizeof buf, "%.17g", emb.values.at(i, j));
			out << ',' << buf;
		}
		out << "\n";
	}
}

EmbeddingMatrix read_embeddings_csv(const std::string& path, const std::string& city_id) {
	std::ifstream in(path, std::ios::binary);
	if (!in) throw ParseError("embeddings: cannot open '" + path + "'");
	std::string line;
	if (!std::getline(in, line)) throw SchemaError(path + ": empty file");
	if (!line.empty() && line.back() == '\r') line.pop_back();
	if (line.rfind("cell_q,cell_r", 0) != 0)
		throw SchemaError(path + ": expected header starting cell_q,cell_r");
	const std::size_t dims =
		static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) - 1;
	if (dims == 0) throw SchemaError(path + ": no embedding columns");

	std::vector<geo::HexCellId> cells;
	std::vector<double> values;
	std::size_t line_no = 1;
	while (std::getline(in, line)) {
		++line_no;
		if (!line.empty() && line.back() == '\r') line.pop_back();
		if (line.empty()) continue;
		std::stringstream ss(line);
		std::string tok;
		std::vector<std::string> cols;
		while (std::getline(ss, tok, ',')) cols.push_back(tok);
		if (cols.size() != dims + 2)
			throw SchemaError(path + " line " + std::to_string(line_no) +
							  ": wrong column count");
		geo::HexCellId cell{std::stoi(cols[0]), std::stoi(cols[1]), city_id};
		cells.push_back(cell);
		for (std::size_t j = 0; j < dims; ++j) values.push_back(std::stod(cols[2 + j]));
	}
	if (cells.empty()) throw EmptyCollectionError(path + ": no embedding rows");

	EmbeddingMatrix emb;
	emb.cells = std::move(cells);
	emb.values = Matrix(emb.cells.size(), dims);
	emb.values.data = std::move(values);
	emb.rebuild_index();
	return emb;
}

GradCheckResult grad_check(const EncoderParams& params,
						   const std::vector<HexPatch>& patches, double eps) {
	if (patches.empty()) throw InsufficientDataError("grad_check: no patches");
	EncoderParams work = params;
	std::vector<double> analytic(work.n_params(), 0.0);
	for (const auto& patch : patches) loss_and_grad(work, patch, analytic);

	auto total_loss = [&]() {
		double s = 0.0;
		for (const auto& patch : patches) s += forward(work, patch).loss;
		return s;
	};

	GradCheckResult res;
	res.n_params = work.n_params();
	for (std::size_t k = 0; k < work.n_params(); ++k) {
		const double orig = work.theta()[k];
		work.theta()[k] = orig + eps;
		const double up = total_loss();
		work.theta()[k] = orig - eps;
		const double down = total_loss();
		work.theta()[k] = orig;
		const double fd = (up - down) / (2.0 * eps);
		const double abs_err = std::abs(fd - analytic[k]);
		const double rel_err =
			abs_err / std::max({std::abs(fd), std::abs(analytic[k]), 1e-2});
		res.max_abs_err = std::max(res.max_abs_err, abs_err);
		res.max_rel_err = std::max(res.max_rel_err, rel_err);
	}
	return res;
}

void EncoderParams::save(const std::string& path) const {
	ordered_json j;
	j["format"] = "hex-autoencoder";
	j["version"] = 1;
	j["radius"] = cfg_.radius;
	j["n_tags"] = cfg_.n_tags;
	j["conv_width"] = cfg_.conv_width;
	j["hidden_width"] = cfg_.hidden_width;
	j["bottleneck"] = cfg_.bottleneck;
	j["log1p_inputs"] = cfg_.log1p_inputs;
	j["theta"] = theta_;
	std::ofstream out(path, std::ios::binary);
	if (!out) throw ParseError("encoder params: cannot write '" + path + "'");
	out << j.dump() << "\n";
}

EncoderParams EncoderParams::load(const std::string& path) {
	std::ifstream in(path, std::ios::binary);
	if (!in) throw ParseError("encoder params: cannot open '" + path + "'");
	json j;
	try {
		j = json::parse(in);
	} catch (const json::parse_error& e) {
		throw ParseError(path + ": malformed JSON at byte " + std::to_string(e.byte));
	}
	if (j.value("format", "") != "hex-autoencoder" || j.value("version", 0) != 1)
		throw SchemaError(path + ": not a version-1 hex-autoencoder file");
	EncoderConfig cfg;
	cfg.radius = j.at("radius").get<int>();
	cfg.n_tags = j.at("n_tags").get<std::size_t>();
	cfg.conv_width = j.at("conv_width").get<std::size_t>();
	cfg.hidden_width = j.at("hidden_width").get<std::size_t>();
	cfg.bottleneck = j.at("bottleneck").get<std::size_t>();
	cfg.log1p_inputs = j.at("log1p_inputs").get<bool>();
	EncoderParams p(cfg, 0);
	auto theta = j.at("theta").get<std::vector<double>>();
	if (theta.size() != p.n_params())
		throw SchemaError(path + ": parameter vector has wrong length");
	p.theta_ = std::move(theta);
	return p;
}

}  // namespace lastmile::embed
