import init, { powerProjection, hessianErrorGrid, convergenceTraces } from "./pkg/span_demo.js";

const COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf"];
const num = (id) => Number(document.getElementById(id).value);

function guard(outId, f) {
  try {
    f();
  } catch (e) {
    document.getElementById(outId).textContent = String(e.message ?? e);
  }
}

function drawProjection() {
  const q = num("pp-q");
  document.getElementById("pp-qv").textContent = q;
  guard("pp-out", () => {
    const data = powerProjection(q, num("pp-n"), num("pp-seed"));
    const cv = document.getElementById("pp-canvas");
    const ctx = cv.getContext("2d");
    const r = cv.width / 2 - 10;
    ctx.clearRect(0, 0, cv.width, cv.height);
    ctx.strokeStyle = "#bbb";
    ctx.beginPath();
    ctx.arc(cv.width / 2, cv.height / 2, r, 0, 2 * Math.PI);
    ctx.stroke();
    ctx.strokeStyle = "#e88";
    ctx.beginPath();
    ctx.arc(cv.width / 2, cv.height / 2, r * Math.sqrt(1 - 0.99 * 0.99), 0, 2 * Math.PI);
    ctx.stroke();
    ctx.fillStyle = "#1f77b4";
    for (let i = 1; i < data.length; i += 3) {
      ctx.fillRect(cv.width / 2 + r * data[i] - 1.5, cv.height / 2 - r * data[i + 1] - 1.5, 3, 3);
    }
    document.getElementById("pp-out").textContent =
      `${(100 * data[0]).toFixed(1)}% of images within 0.99 cosine of e3 (inside the red circle)`;
  });
}

// series: [{ label, ys }], xs shared; log10 y axis
function plotLog(canvasId, legendId, xs, series, xlabel, dashed) {
  const cv = document.getElementById(canvasId);
  const ctx = cv.getContext("2d");
  const pad = { l: 60, r: 20, t: 15, b: 40 };
  const w = cv.width - pad.l - pad.r;
  const h = cv.height - pad.t - pad.b;
  const floor = 1e-16;
  const all = series.flatMap((s) => s.ys).concat(dashed ? [dashed.y] : []).map((v) => Math.max(v, floor));
  let lo = Math.floor(Math.log10(Math.min(...all)));
  let hi = Math.ceil(Math.log10(Math.max(...all)));
  if (hi === lo) hi += 1;
  const x0 = Math.min(...xs), x1 = Math.max(...xs);
  const px = (x) => pad.l + (x1 === x0 ? 0 : (w * (x - x0)) / (x1 - x0));
  const py = (y) => pad.t + (h * (hi - Math.log10(Math.max(y, floor)))) / (hi - lo);

  ctx.clearRect(0, 0, cv.width, cv.height);
  ctx.font = "12px system-ui";
  ctx.fillStyle = "#444";
  ctx.strokeStyle = "#eee";
  for (let e = lo; e <= hi; e++) {
    ctx.beginPath();
    ctx.moveTo(pad.l, py(10 ** e));
    ctx.lineTo(pad.l + w, py(10 ** e));
    ctx.stroke();
    ctx.fillText(`1e${e}`, 8, py(10 ** e) + 4);
  }
  for (const x of xs) {
    if (xs.length <= 30 || x % 5 === 0) ctx.fillText(String(x), px(x) - 4, pad.t + h + 16);
  }
  ctx.fillText(xlabel, pad.l + w / 2 - 20, pad.t + h + 34);

  series.forEach((s, k) => {
    ctx.strokeStyle = COLORS[k % COLORS.length];
    ctx.lineWidth = 2;
    ctx.beginPath();
    s.ys.forEach((y, i) => (i ? ctx.lineTo(px(xs[i]), py(y)) : ctx.moveTo(px(xs[i]), py(y))));
    ctx.stroke();
  });
  if (dashed) {
    ctx.strokeStyle = "#000";
    ctx.setLineDash([6, 4]);
    ctx.beginPath();
    ctx.moveTo(pad.l, py(dashed.y));
    ctx.lineTo(pad.l + w, py(dashed.y));
    ctx.stroke();
    ctx.setLineDash([]);
  }
  ctx.lineWidth = 1;
  document.getElementById(legendId).innerHTML = series
    .map((s, k) => `<span style="color:${COLORS[k % COLORS.length]}">■ ${s.label}</span>`)
    .concat(dashed ? [`<span>- - ${dashed.label}</span>`] : [])
    .join("");
}

function drawErrorGrid() {
  guard("he-legend", () => {
    const d = num("he-d"), m = num("he-m"), lMax = num("he-l"), qMax = num("he-q");
    const grid = hessianErrorGrid(d, num("he-decay"), m, lMax, qMax, 3, 11);
    const ls = [];
    for (let l = m + 4; l <= lMax; l++) ls.push(l);
    const series = [];
    for (let q = 0; q <= qMax; q++) {
      series.push({ label: `q = ${q}`, ys: Array.from(grid.slice(1 + q * ls.length, 1 + (q + 1) * ls.length)) });
    }
    plotLog("he-canvas", "he-legend", ls, series, "sketch width l", { y: grid[0], label: `NewSamp, m = ${m}` });
  });
}

function drawTraces() {
  guard("ct-legend", () => {
    const it = num("ct-it");
    const t = convergenceTraces(num("ct-n"), num("ct-d"), it, num("ct-seed"));
    const xs = Array.from({ length: it }, (_, i) => i + 1);
    const names = ["SPAN", "NewSamp", "gradient descent"];
    const series = names.map((label, k) => ({ label, ys: Array.from(t.slice(k * it, (k + 1) * it)) }));
    plotLog("ct-canvas", "ct-legend", xs, series, "iteration");
  });
}

await init();
for (const id of ["pp-q", "pp-n", "pp-seed"]) document.getElementById(id).addEventListener("input", drawProjection);
document.getElementById("he-run").addEventListener("click", drawErrorGrid);
document.getElementById("ct-run").addEventListener("click", drawTraces);
drawProjection();
drawErrorGrid();
drawTraces();
