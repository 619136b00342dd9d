/**
 * Browser entry point: connects to the bridge WebSocket, feeds frames into
 * the ViewerSession, renders the grid canvases on every complete step group
 * and the trajectory as a three.js polyline with orbit controls, and wires
 * apply/dismiss buttons for prune proposals.
 */

import * as THREE from "three";
import { OrbitControls } from "three/examples/jsm/controls/OrbitControls.js";

import { CanvasPainter, renderDistributionGrid, renderImageGrid, renderWeightGrid } from "./render.js";
import { ViewerSession } from "./session.js";
import { buildTrajectoryGeometry } from "./trajectory.js";
import { Frame } from "./types.js";

function canvasPainter(id: string): { painter: CanvasPainter; el: HTMLCanvasElement } {
  const el = document.getElementById(id) as HTMLCanvasElement;
  return { painter: new CanvasPainter(el.getContext("2d")!), el };
}

const wsUrl = (document.getElementById("server") as HTMLInputElement).value || `ws://${location.hostname}:7041`;
const statusEl = document.getElementById("status")!;
const proposalsEl = document.getElementById("proposals")!;

const weight = canvasPainter("weight-grid");
const image = canvasPainter("image-grid");
const dist = canvasPainter("distribution-grid");

// --- trajectory scene -------------------------------------------------------

const trajCanvas = document.getElementById("trajectory") as HTMLCanvasElement;
const renderer = new THREE.WebGLRenderer({ canvas: trajCanvas, antialias: true });
const scene = new THREE.Scene();
scene.background = new THREE.Color(0x111118);
const camera = new THREE.PerspectiveCamera(50, trajCanvas.width / trajCanvas.height, 0.01, 100);
camera.position.set(1.6, 1.4, 1.8);
const controls = new OrbitControls(camera, trajCanvas);
controls.target.set(0.5, 0.5, 0.5);
let trajLine: THREE.Line | null = null;

function animate() {
  requestAnimationFrame(animate);
  controls.update();
  renderer.render(scene, camera);
}
animate();

// --- session wiring ---------------------------------------------------------

const socket = new WebSocket(wsUrl);
const session = new ViewerSession(
  (frame: Frame) => socket.send(JSON.stringify(frame)),
  {
    onStepGroup: (step) => {
      statusEl.textContent = `step ${step} | groups ${session.completeGroups} | dropped ${session.droppedGroups}`;
      const wg = session.geometry("weight_grid", 0);
      if (wg) renderWeightGrid(weight.painter, wg, weight.el.width, weight.el.height);
      const ig = session.geometry("image_grid", 0);
      if (ig) renderImageGrid(image.painter, ig, image.el.width, image.el.height);
      const dg = session.geometry("distribution_grid", 0);
      if (dg) renderDistributionGrid(dist.painter, dg, dist.el.width, dist.el.height);
      const tj = session.geometry("trajectory", 0);
      if (tj) {
        const geo = buildTrajectoryGeometry(tj);
        const geometry = new THREE.BufferGeometry();
        geometry.setAttribute("position", new THREE.BufferAttribute(geo.positions, 3));
        geometry.setAttribute("color", new THREE.BufferAttribute(geo.colors, 3));
        if (trajLine) scene.remove(trajLine);
        trajLine = new THREE.Line(geometry, new THREE.LineBasicMaterial({ vertexColors: true }));
        scene.add(trajLine);
      }
      renderProposals();
    },
    onProposal: () => renderProposals(),
    onAck: () => renderProposals(),
    onClose: (reason) => (statusEl.textContent = `closed: ${reason}`),
  },
);

function renderProposals() {
  session.checkTimeouts();
  proposalsEl.innerHTML = "";
  for (const [id, state] of session.proposals) {
    const row = document.createElement("div");
    row.className = `proposal ${state.status}`;
    const merges = state.body.merges
      .map((m) => `keep ${m.keep}, remove {${m.remove.join(",")}}`)
      .join("; ");
    row.textContent = `layer ${state.body.layer}: ${merges} [${state.status}${state.reason ? ": " + state.reason : ""}] `;
    if (state.status === "pending") {
      for (const action of ["apply", "dismiss"] as const) {
        const btn = document.createElement("button");
        btn.textContent = action;
        btn.onclick = () => session.actOnProposal(id, action);
        row.appendChild(btn);
      }
    }
    proposalsEl.appendChild(row);
  }
}

socket.onopen = () => {
  statusEl.textContent = "connected, waiting for frames";
  session.start();
};
socket.onmessage = (ev) => session.ingest(JSON.parse(ev.data as string) as Frame);
socket.onclose = () => (statusEl.textContent = "disconnected");
