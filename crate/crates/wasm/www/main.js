// Glue for the guided-recon browser demo. Build the wasm package first:
//   wasm-pack build --target web --out-dir www/pkg crates/wasm
// then serve this directory (e.g. `python3 -m http.server -d crates/wasm/www`).

import init, { Demo } from "./pkg/guided_recon_wasm.js";

const SIZE = 60;
const SEED = 1;

const $ = (id) => document.getElementById(id);

function paint(canvas, rgba, size) {
  canvas.width = size;
  canvas.height = size;
  const ctx = canvas.getContext("2d");
  const img = new ImageData(new Uint8ClampedArray(rgba), size, size);
  ctx.putImageData(img, 0, 0);
}

function sliderValues() {
  return {
    eta: Math.pow(10, parseFloat($("eta").value)),
    alpha: Math.pow(10, parseFloat($("alpha").value)),
    gamma: parseFloat($("gamma").value),
    iters: parseInt($("iters").value, 10),
  };
}

function showSliderLabels() {
  const v = sliderValues();
  $("etaOut").value = v.eta.toPrecision(3);
  $("alphaOut").value = v.alpha.toPrecision(3);
  $("gammaOut").value = v.gamma.toFixed(2);
  $("itersOut").value = v.iters;
}

async function main() {
  await init();
  const demo = new Demo(SIZE, SEED, 5, 3);

  paint($("truth"), demo.truth_rgba(), SIZE);
  paint($("guide"), demo.guide_rgba(), SIZE);
  paint($("sigma2"), demo.similarity_rgba(), SIZE);
  $("simstats").textContent =
    `edge-set overlap (Jaccard): ${demo.similarity_jaccard().toFixed(3)}, ` +
    `parallel fraction on shared edges: ${demo.similarity_parallel_fraction().toFixed(3)}`;

  const refreshFields = () => {
    showSliderLabels();
    const { eta } = sliderValues();
    paint($("wfield"), demo.edge_weight_rgba(eta), SIZE);
    paint($("xifield"), demo.edge_direction_rgba(eta), SIZE);
  };
  $("eta").addEventListener("input", refreshFields);
  ["alpha", "gamma", "iters"].forEach((id) =>
    $(id).addEventListener("input", showSliderLabels));
  refreshFields();

  $("run").addEventListener("click", () => {
    const v = sliderValues();
    const reg = $("reg").value;
    const testCase = $("case").value;
    $("status").textContent = "solving...";
    $("run").disabled = true;
    // Let the browser paint the status line before the solve blocks.
    setTimeout(() => {
      try {
        const t0 = performance.now();
        const rgba = demo.reconstruct(
          testCase, reg, v.alpha, v.eta, v.gamma, 0.05, v.iters);
        const dt = ((performance.now() - t0) / 1000).toFixed(2);
        paint($("recon"), rgba, SIZE);
        $("scores").textContent =
          `PSNR ${demo.last_psnr().toFixed(2)} dB, ` +
          `SSIM ${demo.last_ssim().toFixed(4)} (${dt}s)`;
        $("status").textContent = "";
      } catch (e) {
        $("status").textContent = `error: ${e}`;
      } finally {
        $("run").disabled = false;
      }
    }, 20);
  });
}

main();
