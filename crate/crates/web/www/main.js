import init, { moment_curve, relaxed_histogram, gradient_mae } from "./pkg/poisson_relax_web.js";

const $ = (id) => document.getElementById(id);
const COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

// Line or bar plot on a canvas. series: [{label, xs, ys, bars?}]
function plot(canvas, series, { logX = false, logY = false } = {}) {
  const ctx = canvas.getContext("2d");
  const W = canvas.width, H = canvas.height, pad = 40;
  ctx.clearRect(0, 0, W, H);
  const tx = logX ? Math.log10 : (v) => v;
  const ty = logY ? (v) => Math.log10(Math.max(v, 1e-12)) : (v) => v;
  const xs = series.flatMap((s) => Array.from(s.xs, tx));
  const ys = series.flatMap((s) => Array.from(s.ys, ty));
  const [x0, x1] = [Math.min(...xs), Math.max(...xs)];
  let [y0, y1] = [Math.min(...ys), Math.max(...ys)];
  if (!logY) y0 = Math.min(0, y0);
  if (y1 === y0) y1 = y0 + 1;
  const px = (v) => pad + ((tx(v) - x0) / (x1 - x0 || 1)) * (W - 2 * pad);
  const py = (v) => H - pad - ((ty(v) - y0) / (y1 - y0)) * (H - 2 * pad);

  ctx.strokeStyle = "#888";
  ctx.strokeRect(pad, pad, W - 2 * pad, H - 2 * pad);
  ctx.fillStyle = "#444";
  ctx.font = "11px sans-serif";
  const fmt = (v) => (logY ? (10 ** v).toPrecision(2) : v.toPrecision(3));
  ctx.fillText(fmt(y1), 2, pad + 4);
  ctx.fillText(fmt(y0), 2, H - pad);
  ctx.fillText((logX ? 10 ** x0 : x0).toPrecision(2), pad, H - pad + 14);
  ctx.fillText((logX ? 10 ** x1 : x1).toPrecision(2), W - pad - 20, H - pad + 14);

  series.forEach((s, i) => {
    ctx.strokeStyle = ctx.fillStyle = COLORS[i % COLORS.length];
    if (s.bars) {
      const w = Math.max(1, (W - 2 * pad) / s.xs.length * 0.8);
      s.xs.forEach((x, j) => {
        const top = py(s.ys[j]);
        ctx.globalAlpha = 0.5;
        ctx.fillRect(px(x) - w / 2, top, w, H - pad - top);
        ctx.globalAlpha = 1;
      });
    } else {
      ctx.beginPath();
      s.xs.forEach((x, j) => (j ? ctx.lineTo(px(x), py(s.ys[j])) : ctx.moveTo(px(x), py(s.ys[j]))));
      ctx.lineWidth = 2;
      ctx.stroke();
      if (s.points) s.xs.forEach((x, j) => ctx.fillRect(px(x) - 2, py(s.ys[j]) - 2, 4, 4));
    }
    ctx.fillText(s.label, W - pad - 120, pad + 14 + 14 * i);
  });
}

function guarded(out, f) {
  try {
    out.classList.remove("err");
    f();
  } catch (e) {
    out.classList.add("err");
    out.textContent = String(e.message ?? e);
  }
}

function drawMoments() {
  guarded($("m-out"), () => {
    const c = moment_curve($("m-ind").value, +$("m-lo").value, +$("m-hi").value, 200);
    plot($("m-plot"), [
      { label: "mean factor c", xs: c.taus, ys: c.c },
      { label: "variance factor v", xs: c.taus, ys: c.v },
      { label: "Fano factor", xs: c.taus, ys: c.fano },
    ], { logX: true });
    const last = c.taus.length - 1;
    $("m-out").textContent = `at τ=${c.taus[last].toFixed(3)}: c=${c.c[last].toFixed(4)} v=${c.v[last].toFixed(4)} F=${c.fano[last].toFixed(4)}`;
  });
}

function drawHistogram() {
  $("h-tau-v").textContent = (+$("h-tau").value).toFixed(2);
  guarded($("h-out"), () => {
    const h = relaxed_histogram($("h-method").value, +$("h-rate").value, +$("h-tau").value, +$("h-n").value, 1);
    plot($("h-plot"), [
      { label: "relaxed samples", xs: h.centers, ys: h.density, bars: true },
      { label: "Poisson PMF", xs: h.centers, ys: h.pmf, points: true },
    ]);
    $("h-out").textContent = `mean ${h.mean.toFixed(3)}  variance ${h.variance.toFixed(3)}  W1 to exact ${h.w1.toFixed(4)}`;
  });
}

function drawMae() {
  guarded($("g-out"), () => {
    const rate = +$("g-rate").value, n = +$("g-n").value, f = $("g-f").value;
    const methods = ["eat-sigmoid", "eat-cubic", "gsm", "score"];
    const curves = methods.map((m) => gradient_mae(f, m, rate, n, 20, 0));
    plot($("g-plot"), curves.map((c, i) => ({ label: methods[i], xs: c.taus, ys: c.mae, points: true })), { logX: true, logY: true });
    $("g-out").textContent = `exact gradient ${curves[0].exact.toFixed(6)}; MAE over 20 estimates of ${n} draws each`;
  });
}

await init();
for (const id of ["m-ind", "m-lo", "m-hi"]) $(id).addEventListener("input", drawMoments);
for (const id of ["h-method", "h-rate", "h-tau", "h-n"]) $(id).addEventListener("input", drawHistogram);
$("g-run").addEventListener("click", drawMae);
drawMoments();
drawHistogram();
drawMae();
