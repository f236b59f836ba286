import init, { forge_and_analyze, quality_matrix, refine_map } from "./pkg/splicetrace_web.js";

const PALETTE = [[0, 0, 0], [255, 0, 0], [0, 255, 0], [0, 64, 255]];
const $ = (id) => document.getElementById(id);

function drawLabels(canvas, labels, rows, cols, scale) {
  canvas.width = cols * scale;
  canvas.height = rows * scale;
  const ctx = canvas.getContext("2d");
  for (let r = 0; r < rows; r++) {
    for (let c = 0; c < cols; c++) {
      const [R, G, B] = PALETTE[labels[r * cols + c]] ?? [128, 128, 128];
      ctx.fillStyle = `rgb(${R},${G},${B})`;
      ctx.fillRect(c * scale, r * scale, scale, scale);
    }
  }
}

function drawGray(canvas, pixels, rows, cols) {
  canvas.width = cols;
  canvas.height = rows;
  const ctx = canvas.getContext("2d");
  const img = ctx.createImageData(cols, rows);
  pixels.forEach((v, i) => {
    img.data.set([v, v, v, 255], i * 4);
  });
  ctx.putImageData(img, 0, 0);
}

function runDemo() {
  const status = $("status");
  status.textContent = "running...";
  // let the status paint before the synchronous call
  setTimeout(() => {
    try {
      const t0 = performance.now();
      const d = JSON.parse(forge_and_analyze(
        Number($("seed").value), Number($("k").value), $("type").value,
        Number($("size").value), $("backend").value));
      const ms = performance.now() - t0;
      drawGray($("image"), d.pixels, d.rows, d.cols);
      const scale = Math.max(1, Math.floor(d.cols / d.map_cols));
      drawLabels($("gt"), d.gt, d.map_rows, d.map_cols, scale);
      const blank = new Array(d.map_rows * d.map_cols).fill(0);
      drawLabels($("prelim"), d.preliminary ?? blank, d.map_rows, d.map_cols, scale);
      drawLabels($("refined"), d.refined, d.map_rows, d.map_cols, scale);
      const ev = d.eigenvalues.slice(0, 5).map((v) => v.toFixed(4)).join(" ");
      status.textContent =
        `QF1 background ${d.qf_background}, donors [${d.qf_donors.join(", ")}]\n` +
        `k=${d.k}  k_hat=${d.k_hat}  k_r=${d.k_r}  ${d.decision}\n` +
        `MCC ${d.mcc.toFixed(3)}  NMI ${d.nmi.toFixed(3)}  eigenvalues ${ev}\n` +
        `${ms.toFixed(0)} ms`;
    } catch (e) {
      status.textContent = `error: ${e.message ?? e}`;
    }
  }, 10);
}

function showTable() {
  const qf = Number($("qf").value);
  $("qf-value").textContent = qf;
  const steps = quality_matrix(qf);
  const rows = [];
  for (let r = 0; r < 8; r++) {
    rows.push("<tr>" + Array.from(steps.slice(r * 8, r * 8 + 8), (v) => `<td>${v}</td>`).join("") + "</tr>");
  }
  $("qtable").innerHTML = rows.join("");
}

const GRID = 24;
const CELL = 12;
let painted = new Uint8Array(GRID * GRID);

function setupPainter() {
  const canvas = $("draw");
  let down = false;
  const paint = (ev) => {
    const rect = canvas.getBoundingClientRect();
    const c = Math.floor((ev.clientX - rect.left) / CELL);
    const r = Math.floor((ev.clientY - rect.top) / CELL);
    if (r < 0 || c < 0 || r >= GRID || c >= GRID) return;
    painted[r * GRID + c] = Number($("paint").value);
    drawLabels(canvas, painted, GRID, GRID, CELL);
  };
  canvas.addEventListener("mousedown", (ev) => { down = true; paint(ev); });
  canvas.addEventListener("mousemove", (ev) => { if (down) paint(ev); });
  window.addEventListener("mouseup", () => { down = false; });

  // start from a square with a ring and two specks
  for (let r = 6; r < 16; r++) for (let c = 6; c < 16; c++) painted[r * GRID + c] = 1;
  for (let i = 5; i <= 16; i++) {
    painted[5 * GRID + i] = painted[16 * GRID + i] = painted[i * GRID + 5] = painted[i * GRID + 16] = 2;
  }
  painted[2 * GRID + 20] = painted[20 * GRID + 3] = 3;
  drawLabels(canvas, painted, GRID, GRID, CELL);
  drawLabels($("drawn-refined"), new Uint8Array(GRID * GRID), GRID, GRID, CELL);
}

function runRefine() {
  try {
    const out = refine_map(painted, GRID, GRID, Number($("erosion").value), 0);
    drawLabels($("drawn-refined"), out, GRID, GRID, CELL);
    const count = (a) => new Set(a).size;
    $("refine-status").textContent = `labels before ${count(painted)}, after ${count(out)}`;
  } catch (e) {
    $("refine-status").textContent = `error: ${e.message ?? e}`;
  }
}

await init();
$("run").addEventListener("click", runDemo);
$("qf").addEventListener("input", showTable);
$("refine").addEventListener("click", runRefine);
$("clear").addEventListener("click", () => {
  painted = new Uint8Array(GRID * GRID);
  drawLabels($("draw"), painted, GRID, GRID, CELL);
});
showTable();
setupPainter();
runDemo();
