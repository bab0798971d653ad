// Build first: wasm-pack build crates/wasm --target web --out-dir www/pkg
import init, { brl_profile, nash_values, heat_control } from "./pkg/hilbert_ctl_wasm.js";

const $ = (id) => document.getElementById(id);
const COLORS = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b"];

function call(f, ...args) {
  const v = JSON.parse(f(...args));
  if (v.error) throw new Error(v.error);
  return v;
}

// Draws each series of [x, y] points, scaled to a shared box.
function plot(canvas, series, { zeroLine = false } = {}) {
  const ctx = canvas.getContext("2d");
  const { width: w, height: h } = canvas;
  const pad = 30;
  ctx.clearRect(0, 0, w, h);
  const pts = series.flat();
  if (!pts.length) return;
  const xs = pts.map((p) => p[0]);
  const ys = pts.map((p) => p[1]);
  const [x0, x1] = [Math.min(...xs), Math.max(...xs)];
  let [y0, y1] = [Math.min(...ys), Math.max(...ys)];
  if (y0 === y1) { y0 -= 1; y1 += 1; }
  const sx = (x) => pad + ((x - x0) / (x1 - x0 || 1)) * (w - 2 * pad);
  const sy = (y) => h - pad - ((y - y0) / (y1 - y0)) * (h - 2 * pad);
  ctx.strokeStyle = "#999";
  ctx.strokeRect(pad, pad, w - 2 * pad, h - 2 * pad);
  if (zeroLine && y0 < 0 && y1 > 0) {
    ctx.beginPath();
    ctx.moveTo(pad, sy(0));
    ctx.lineTo(w - pad, sy(0));
    ctx.stroke();
  }
  ctx.fillStyle = "#333";
  ctx.fillText(y1.toPrecision(4), 2, pad - 4);
  ctx.fillText(y0.toPrecision(4), 2, h - pad + 14);
  ctx.fillText(x0.toPrecision(3), pad, h - 6);
  ctx.fillText(x1.toPrecision(3), w - pad - 24, h - 6);
  series.forEach((s, i) => {
    ctx.strokeStyle = COLORS[i % COLORS.length];
    ctx.beginPath();
    s.forEach(([x, y], j) => (j ? ctx.lineTo(sx(x), sy(y)) : ctx.moveTo(sx(x), sy(y))));
    ctx.stroke();
  });
}

function runBrl() {
  try {
    const v = call(brl_profile, +$("brl-lo").value, +$("brl-hi").value, 60, +$("brl-dim").value);
    const steps = v.levels[0].min_pi3.length;
    const series = [];
    for (let k = 0; k < steps; k++) {
      series.push(v.levels.filter((l) => l.min_pi3[k] !== null).map((l) => [l.gamma, l.min_pi3[k]]));
    }
    plot($("brl-plot"), series, { zeroLine: true });
    const first = v.levels.find((l) => l.feasible);
    $("brl-out").textContent =
      `norm ${v.norm.toFixed(6)}\nfirst feasible level on the grid: ${first ? first.gamma.toFixed(4) : "none"}\n` +
      "curves: smallest eigenvalue of pi3 at each step";
  } catch (e) {
    $("brl-out").textContent = e.message;
  }
}

function runNash() {
  try {
    const v = call(nash_values, +$("nash-gamma").value, +$("nash-rho").value, 64);
    $("nash-out").textContent =
      `gamma ${v.gamma.toFixed(2)}  rho ${v.rho.toFixed(2)}\n` +
      `J1 ${v.j1.toFixed(6)}  J2 ${v.j2.toFixed(6)}\n` +
      `K1(0) ${v.k1.toFixed(6)}  K2(0) ${v.k2.toFixed(6)}`;
  } catch (e) {
    $("nash-out").textContent = e.message;
  }
}

function runHeat() {
  try {
    const v = call(heat_control, +$("heat-case").value, +$("heat-modes").value, 201);
    plot($("heat-plot"), v.fields.map((f) => f.map((t, i) => [v.x[i], t])));
    $("heat-out").textContent =
      `inputs ${v.inputs.map((u) => u.toFixed(3)).join(", ")}\nvalue ${v.value?.toFixed(3)}\n` +
      "curves: temperature at k = 0, 1, 2, 3";
  } catch (e) {
    $("heat-out").textContent = e.message;
  }
}

await init();
$("brl-run").onclick = runBrl;
$("heat-run").onclick = runHeat;
$("nash-gamma").oninput = runNash;
$("nash-rho").oninput = runNash;
runBrl();
runNash();
runHeat();
