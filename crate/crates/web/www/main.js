import init, { contraction_sweep, neighbourhood_sweep, run_traces } from "./pkg/pushopt_web.js";

const $ = (id) => document.getElementById(id);
const status = (msg) => { $("status").textContent = msg; };

function instance() {
  return [Number($("n").value), Number($("p").value), $("case2").checked, BigInt($("seed").value)];
}

// Plots series {xs, ys, color} on one canvas. Non-finite or null points
// break the line; logY plots log10 of positive values.
function plot(canvas, series, { logY = false, vlines = [] } = {}) {
  const ctx = canvas.getContext("2d");
  const { width: w, height: h } = canvas;
  const pad = 45;
  ctx.clearRect(0, 0, w, h);
  const tf = (y) => (logY ? (y > 0 ? Math.log10(y) : NaN) : y);
  const all = series.flatMap((s) => s.ys.map(tf)).filter(Number.isFinite);
  const xsAll = series.flatMap((s) => s.xs);
  if (all.length === 0) return;
  let [y0, y1] = [Math.min(...all), Math.max(...all)];
  if (y0 === y1) { y0 -= 1; y1 += 1; }
  const [x0, x1] = [Math.min(...xsAll), Math.max(...xsAll)];
  const px = (x) => pad + ((x - x0) / (x1 - x0 || 1)) * (w - 2 * pad);
  const py = (y) => h - pad + ((y0 - y) / (y1 - y0)) * (h - 2 * pad);

  ctx.strokeStyle = "#444";
  ctx.strokeRect(pad, pad, w - 2 * pad, h - 2 * pad);
  ctx.fillStyle = "#444";
  ctx.font = "11px sans-serif";
  for (let k = 0; k <= 4; k++) {
    const y = y0 + ((y1 - y0) * k) / 4;
    ctx.fillText((logY ? "1e" + y.toFixed(1) : y.toPrecision(3)), 2, py(y) + 4);
    const x = x0 + ((x1 - x0) * k) / 4;
    ctx.fillText(x.toPrecision(3), px(x) - 10, h - pad + 15);
  }
  for (const x of vlines) {
    ctx.strokeStyle = "#888";
    ctx.setLineDash([4, 4]);
    ctx.beginPath();
    ctx.moveTo(px(x), pad);
    ctx.lineTo(px(x), h - pad);
    ctx.stroke();
    ctx.setLineDash([]);
  }
  for (const s of series) {
    ctx.strokeStyle = s.color;
    ctx.beginPath();
    let pen = false;
    s.xs.forEach((x, i) => {
      const y = tf(s.ys[i]);
      if (s.ys[i] === null || !Number.isFinite(y)) { pen = false; return; }
      pen ? ctx.lineTo(px(x), py(y)) : ctx.moveTo(px(x), py(y));
      pen = true;
    });
    ctx.stroke();
  }
}

function guarded(f) {
  return () => {
    status("");
    try { f(); } catch (e) { status(String(e)); }
  };
}

$("run-contraction").onclick = guarded(() => {
  const r = JSON.parse(contraction_sweep(...instance(), 200));
  plot($("contraction"), [
    { xs: r.alpha, ys: r.lipschitz, color: "#1f77b4" },
    { xs: r.alpha, ys: r.envelope, color: "#d62728" },
  ], { vlines: [r.alpha0] });
});

$("run-neighbourhood").onclick = guarded(() => {
  const r = JSON.parse(neighbourhood_sweep(...instance(), 30));
  plot($("neighbourhood"), [
    { xs: r.alpha, ys: r.error, color: "#1f77b4" },
    { xs: r.alpha, ys: r.bound, color: "#d62728" },
  ], { logY: true });
});

$("run-traces").onclick = guarded(() => {
  const r = JSON.parse(run_traces(
    ...instance(),
    Number($("gp-mult").value),
    Number($("alpha-pd").value),
    Number($("gp-iters").value),
    Number($("iters").value),
  ));
  const t = (ys) => ys.map((_, i) => i);
  plot($("traces"), [
    { xs: t(r.gp), ys: r.gp, color: "#1f77b4" },
    { xs: t(r.pd), ys: r.pd, color: "#2ca02c" },
    { xs: t(r.hybrid), ys: r.hybrid, color: "#d62728" },
  ], { logY: true });
});

await init();
status("");
