import init, { kernel_profile, slice_variable_names, gp_slice, solver_trace } from "./pkg/mixopt_demo.js";

const $ = (id) => document.getElementById(id);

function frame(ctx, x0, y0, w, h) {
  ctx.strokeStyle = "#999";
  ctx.strokeRect(x0, y0, w, h);
}

function scaler(lo, hi, a, b) {
  const span = hi - lo || 1;
  return (v) => a + ((v - lo) / span) * (b - a);
}

function polyline(ctx, pts, color, width = 1.5) {
  ctx.strokeStyle = color;
  ctx.lineWidth = width;
  ctx.beginPath();
  let started = false;
  for (const [x, y] of pts) {
    if (!Number.isFinite(y)) { started = false; continue; }
    if (started) ctx.lineTo(x, y); else ctx.moveTo(x, y);
    started = true;
  }
  ctx.stroke();
  ctx.lineWidth = 1;
}

function heatmap(ctx, m, x0, y0, size) {
  const n = m.length;
  const cell = size / n;
  for (let i = 0; i < n; i++) {
    for (let j = 0; j < n; j++) {
      const v = Math.round(255 * (1 - m[i][j]));
      ctx.fillStyle = `rgb(${v},${v},255)`;
      ctx.fillRect(x0 + j * cell, y0 + i * cell, cell, cell);
      ctx.fillStyle = m[i][j] > 0.5 ? "#fff" : "#000";
      ctx.fillText(m[i][j].toFixed(2), x0 + j * cell + 3, y0 + i * cell + cell / 2 + 4);
    }
  }
  frame(ctx, x0, y0, size, size);
}

function drawKernels() {
  const j = JSON.parse(kernel_profile(+$("k-ell").value, +$("k-c").value, +$("k-oell").value, +$("k-levels").value));
  const ctx = $("k-canvas").getContext("2d");
  ctx.clearRect(0, 0, 740, 240);
  ctx.font = "10px sans-serif";
  const sx = scaler(0, 1, 10, 250), sy = scaler(0, 1, 230, 10);
  frame(ctx, 10, 10, 240, 220);
  polyline(ctx, j.continuous.map(([d, k]) => [sx(d), sy(k)]), "#1f77b4", 2);
  heatmap(ctx, j.nominal, 270, 10, 220);
  heatmap(ctx, j.ordinal, 510, 10, 220);
}

function drawSlice() {
  const ctx = $("g-canvas").getContext("2d");
  ctx.clearRect(0, 0, 740, 320);
  let j;
  try {
    j = JSON.parse(gp_slice($("g-var").value, +$("g-n").value, +$("g-ell").value, +$("g-off").value));
  } catch (e) {
    ctx.fillText(String(e), 20, 20);
    return;
  }
  const g = j.grid;
  const ys = g.flatMap((p) => [p.truth, p.mean - 2 * p.sd, p.mean + 2 * p.sd]).filter(Number.isFinite);
  const sx = scaler(0, 1, 10, 730);
  const sy = scaler(Math.min(...ys), Math.max(...ys), 310, 10);
  const eiMax = Math.max(...g.map((p) => p.ei), 1e-12);
  const se = scaler(0, eiMax, 310, 210);
  frame(ctx, 10, 10, 720, 300);
  ctx.fillStyle = "rgba(31,119,180,0.15)";
  ctx.beginPath();
  g.forEach((p, i) => (i ? ctx.lineTo : ctx.moveTo).call(ctx, sx(p.u), sy(p.mean + 2 * p.sd)));
  [...g].reverse().forEach((p) => ctx.lineTo(sx(p.u), sy(p.mean - 2 * p.sd)));
  ctx.fill();
  polyline(ctx, g.map((p) => [sx(p.u), sy(p.truth)]), "#000");
  polyline(ctx, g.map((p) => [sx(p.u), sy(p.mean)]), "#1f77b4", 2);
  polyline(ctx, g.map((p) => [sx(p.u), se(p.ei)]), "#ff7f0e");
  ctx.fillStyle = "#d62728";
  for (const [u, f] of j.samples) {
    ctx.beginPath();
    ctx.arc(sx(u), sy(f), 4, 0, 2 * Math.PI);
    ctx.fill();
  }
}

function drawTrace() {
  const ctx = $("s-canvas").getContext("2d");
  ctx.clearRect(0, 0, 740, 260);
  let j;
  try {
    j = JSON.parse(solver_trace($("s-problem").value, $("s-solver").value, +$("s-budget").value, +$("s-seed").value));
  } catch (e) {
    $("s-best").textContent = String(e);
    return;
  }
  const steps = j.steps;
  const vals = steps.flatMap((s) => [s.objective, s.best]).filter((v) => v !== null);
  const sx = scaler(0, Math.max(steps.length - 1, 1), 10, 730);
  const sy = scaler(Math.min(...vals), Math.max(...vals), 250, 10);
  frame(ctx, 10, 10, 720, 240);
  steps.forEach((s, i) => {
    if (s.objective === null) return;
    ctx.fillStyle = s.feasible ? "#1f77b4" : "#d62728";
    ctx.fillRect(sx(i) - 1.5, sy(s.objective) - 1.5, 3, 3);
  });
  polyline(ctx, steps.map((s, i) => [sx(i), s.best === null ? NaN : sy(s.best)]), "#000", 2);
  const last = steps[steps.length - 1];
  $("s-best").textContent = `evaluations ${steps.length}, best ${last && last.best}\n${JSON.stringify(j.best_point)}`;
}

await init();
for (const name of JSON.parse(slice_variable_names())) {
  $("g-var").add(new Option(name, name));
}
for (const id of ["k-ell", "k-c", "k-oell", "k-levels"]) $(id).addEventListener("input", drawKernels);
for (const id of ["g-var", "g-n", "g-ell", "g-off"]) $(id).addEventListener("input", drawSlice);
$("s-run").addEventListener("click", drawTrace);
drawKernels();
drawSlice();
drawTrace();
