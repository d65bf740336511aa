import init, { random_cell, estimate_cell, latency_sweep } from "./pkg/edgeperf_demo.js";

const $ = (id) => document.getElementById(id);
const status = (msg, err = false) => {
  const el = $("status");
  el.textContent = msg;
  el.className = err ? "err" : "";
};

let currentCell = null;

function drawCell(cell) {
  const canvas = $("cellCanvas");
  const ctx = canvas.getContext("2d");
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  const n = cell.ops.length;
  const pad = 34;
  const xs = [];
  for (let v = 0; v < n; v++) {
    xs.push(pad + (v * (canvas.width - 2 * pad)) / Math.max(1, n - 1));
  }
  const y = canvas.height - 60;

  // Edges as arcs above the vertex row; height grows with span.
  ctx.strokeStyle = "#9aa4b5";
  ctx.lineWidth = 1.25;
  for (let i = 0; i < n; i++) {
    for (let j = i + 1; j < n; j++) {
      if (!cell.adjacency[i][j]) continue;
      const mx = (xs[i] + xs[j]) / 2;
      const lift = 24 + (j - i) * 26;
      ctx.beginPath();
      ctx.moveTo(xs[i], y - 12);
      ctx.quadraticCurveTo(mx, y - lift, xs[j], y - 12);
      ctx.stroke();
      // arrow head
      ctx.beginPath();
      ctx.moveTo(xs[j] - 6, y - 20);
      ctx.lineTo(xs[j], y - 12);
      ctx.lineTo(xs[j] - 9, y - 13);
      ctx.fillStyle = "#9aa4b5";
      ctx.fill();
    }
  }

  const colors = {
    input: "#68707f", output: "#68707f",
    conv3x3: "#2458c5", conv1x1: "#3fa66a", maxpool3x3: "#c57824",
  };
  const short = { input: "in", output: "out", conv3x3: "3x3", conv1x1: "1x1", maxpool3x3: "mp" };
  for (let v = 0; v < n; v++) {
    ctx.beginPath();
    ctx.arc(xs[v], y, 13, 0, Math.PI * 2);
    ctx.fillStyle = colors[cell.ops[v]];
    ctx.fill();
    ctx.fillStyle = "#fff";
    ctx.font = "10px system-ui";
    ctx.textAlign = "center";
    ctx.textBaseline = "middle";
    ctx.fillText(short[cell.ops[v]], xs[v], y);
    ctx.fillStyle = "#68707f";
    ctx.fillText(String(v), xs[v], y + 24);
  }
}

function renderEstimate(doc) {
  const tbody = $("estTable").querySelector("tbody");
  tbody.innerHTML = "";
  const best = Math.min(...doc.estimates.map((e) => e.latency_ms));
  for (const e of doc.estimates) {
    const tr = document.createElement("tr");
    const cells = [
      e.accel,
      e.latency_ms.toFixed(4),
      e.energy_mj.toFixed(4),
      (100 * e.bound_fraction_memory).toFixed(1) + "%",
      (100 * e.cached_fraction).toFixed(1) + "%",
    ];
    cells.forEach((text, i) => {
      const td = document.createElement("td");
      td.textContent = text;
      if (i === 1 && e.latency_ms === best) td.className = "best";
      tr.appendChild(td);
    });
    tbody.appendChild(tr);
  }
  $("estTable").hidden = false;
  $("cellInfo").textContent =
    `hash ${doc.cell.hash.slice(0, 12)}… · ${doc.cell.ops.length} vertices · ` +
    `depth ${doc.cell.depth} · width ${doc.cell.width} · ` +
    `${doc.total_params.toLocaleString()} params · ${doc.total_macs.toLocaleString()} MACs · ` +
    `${doc.layers} layers`;
}

function estimateCurrent() {
  if (!currentCell) return;
  try {
    const doc = JSON.parse(
      estimate_cell(JSON.stringify(currentCell), $("cellMode").value)
    );
    drawCell(doc.cell);
    renderEstimate(doc);
    status("ready");
  } catch (e) {
    status(`estimate failed: ${e}`, true);
  }
}

function roll() {
  try {
    currentCell = JSON.parse(random_cell(Number($("cellSeed").value) >>> 0));
    estimateCurrent();
  } catch (e) {
    status(`cell generation failed: ${e}`, true);
  }
}

function drawSweep(points) {
  const canvas = $("sweepCanvas");
  const ctx = canvas.getContext("2d");
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  const mL = 70, mR = 16, mT = 12, mB = 46;
  const W = canvas.width - mL - mR;
  const H = canvas.height - mT - mB;

  const px = points.map((p) => Math.log10(p.params));
  const py = points.map((p) => p.latency_ms);
  const xMin = Math.min(...px), xMax = Math.max(...px);
  const yMin = 0, yMax = Math.max(...py) * 1.05;
  const X = (v) => mL + ((v - xMin) / (xMax - xMin || 1)) * W;
  const Y = (v) => mT + H - ((v - yMin) / (yMax - yMin || 1)) * H;

  // Axes and gridlines.
  ctx.strokeStyle = "#e3e7ee";
  ctx.fillStyle = "#68707f";
  ctx.font = "12px system-ui";
  ctx.textAlign = "center";
  for (let e = Math.ceil(xMin); e <= xMax; e++) {
    const x = X(e);
    ctx.beginPath(); ctx.moveTo(x, mT); ctx.lineTo(x, mT + H); ctx.stroke();
    ctx.fillText(`10^${e}`, x, mT + H + 18);
  }
  ctx.textAlign = "right";
  const ticks = 5;
  for (let t = 0; t <= ticks; t++) {
    const v = yMin + ((yMax - yMin) * t) / ticks;
    const y = Y(v);
    ctx.beginPath(); ctx.moveTo(mL, y); ctx.lineTo(mL + W, y); ctx.stroke();
    ctx.fillText(v.toFixed(2), mL - 8, y + 4);
  }
  ctx.textAlign = "center";
  ctx.fillText("trainable parameters", mL + W / 2, canvas.height - 8);
  ctx.save();
  ctx.translate(14, mT + H / 2);
  ctx.rotate(-Math.PI / 2);
  ctx.fillText("latency (ms)", 0, 0);
  ctx.restore();

  // Points, shaded by conv3x3 count.
  for (let i = 0; i < points.length; i++) {
    const t = points[i].n_conv3x3 / 5;
    const shade = Math.round(208 - t * 170);
    ctx.fillStyle = `rgba(36, ${Math.max(40, shade - 60)}, ${shade}, 0.55)`;
    ctx.beginPath();
    ctx.arc(X(px[i]), Y(py[i]), 2.6, 0, Math.PI * 2);
    ctx.fill();
  }
}

async function sweep() {
  const btn = $("sweepBtn");
  btn.disabled = true;
  status("sampling…");
  // Yield to the event loop so the status paints first.
  await new Promise((r) => setTimeout(r, 20));
  try {
    const points = JSON.parse(
      latency_sweep(
        Number($("sweepCount").value) >>> 0,
        Number($("sweepSeed").value) >>> 0,
        $("sweepAccel").value,
        $("sweepMode").value
      )
    );
    drawSweep(points);
    status(`ready — ${points.length} cells sampled`);
  } catch (e) {
    status(`sweep failed: ${e}`, true);
  } finally {
    btn.disabled = false;
  }
}

init()
  .then(() => {
    status("ready");
    $("rollBtn").addEventListener("click", () => {
      $("cellSeed").value = String((Number($("cellSeed").value) + 1) >>> 0);
      roll();
    });
    $("cellMode").addEventListener("change", estimateCurrent);
    $("sweepBtn").addEventListener("click", sweep);
    roll();
    sweep();
  })
  .catch((e) => status(`failed to load wasm: ${e}`, true));
