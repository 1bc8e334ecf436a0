/** Canvas transfer-function editor: position x opacity, draggable points.
 *
 * Drag a point to move it (x = scalar position, y = opacity); double
 * click on empty space to add a point, double click a point to remove
 * it; a click selects a point for the shared color picker.
 */

import type { Session } from "./state.js";

const POINT_RADIUS = 6;

export function rgbaToCss(rgba: [number, number, number, number]): string {
  const [r, g, b] = rgba;
  return `rgb(${Math.round(r * 255)}, ${Math.round(g * 255)}, ` +
         `${Math.round(b * 255)})`;
}

export function hexToRgb(hex: string): [number, number, number] {
  const v = hex.replace("#", "");
  return [
    parseInt(v.slice(0, 2), 16) / 255,
    parseInt(v.slice(2, 4), 16) / 255,
    parseInt(v.slice(4, 6), 16) / 255,
  ];
}

export class TfEditor {
  selected = 0;
  private dragging: number | null = null;

  constructor(private readonly canvas: HTMLCanvasElement,
              private readonly session: Session,
              private readonly onChange: () => void) {
    canvas.addEventListener("pointerdown", (e) => this.pointerDown(e));
    canvas.addEventListener("pointermove", (e) => this.pointerMove(e));
    canvas.addEventListener("pointerup", () => (this.dragging = null));
    canvas.addEventListener("dblclick", (e) => this.doubleClick(e));
    this.draw();
  }

  private toCanvas(position: number, alpha: number): [number, number] {
    return [position * this.canvas.width,
            (1 - alpha) * this.canvas.height];
  }

  private fromCanvas(x: number, y: number): [number, number] {
    return [x / this.canvas.width, 1 - y / this.canvas.height];
  }

  private hit(x: number, y: number): number | null {
    for (const [i, p] of this.session.tfPoints.entries()) {
      const [px, py] = this.toCanvas(p.position, p.rgba[3]);
      if (Math.hypot(px - x, py - y) <= POINT_RADIUS + 3) return i;
    }
    return null;
  }

  private eventXY(e: MouseEvent): [number, number] {
    const rect = this.canvas.getBoundingClientRect();
    return [
      ((e.clientX - rect.left) / rect.width) * this.canvas.width,
      ((e.clientY - rect.top) / rect.height) * this.canvas.height,
    ];
  }

  private pointerDown(e: PointerEvent): void {
    const [x, y] = this.eventXY(e);
    const hit = this.hit(x, y);
    if (hit !== null) {
      this.selected = hit;
      this.dragging = hit;
      this.canvas.setPointerCapture(e.pointerId);
    }
    this.draw();
  }

  private pointerMove(e: PointerEvent): void {
    if (this.dragging === null) return;
    const [x, y] = this.eventXY(e);
    const [position, alpha] = this.fromCanvas(x, y);
    this.session.moveTfPoint(this.dragging, position, alpha);
    this.draw();
    this.onChange();
  }

  private doubleClick(e: MouseEvent): void {
    const [x, y] = this.eventXY(e);
    const hit = this.hit(x, y);
    if (hit !== null) {
      if (this.session.removeTfPoint(hit)) {
        this.selected = Math.max(0, this.selected - 1);
        this.draw();
        this.onChange();
      }
      return;
    }
    const [position, alpha] = this.fromCanvas(x, y);
    this.selected = this.session.addTfPoint(
      position, [0.8, 0.8, 0.8, Math.min(1, Math.max(0, alpha))]);
    this.draw();
    this.onChange();
  }

  setSelectedColor(hex: string): void {
    const [r, g, b] = hexToRgb(hex);
    this.session.setTfColor(this.selected, r, g, b);
    this.draw();
    this.onChange();
  }

  draw(): void {
    const ctx = this.canvas.getContext("2d");
    if (!ctx) return;
    const { width, height } = this.canvas;
    ctx.clearRect(0, 0, width, height);

    // color ramp strip along the bottom
    const ramp = ctx.createLinearGradient(0, 0, width, 0);
    for (const p of this.session.tfPoints) {
      ramp.addColorStop(p.position, rgbaToCss(p.rgba));
    }
    ctx.fillStyle = ramp;
    ctx.fillRect(0, height - 12, width, 12);

    // opacity polyline
    ctx.beginPath();
    for (const [i, p] of this.session.tfPoints.entries()) {
      const [x, y] = this.toCanvas(p.position, p.rgba[3]);
      if (i === 0) ctx.moveTo(x, y);
      else ctx.lineTo(x, y);
    }
    ctx.strokeStyle = "#dde";
    ctx.lineWidth = 1.5;
    ctx.stroke();

    for (const [i, p] of this.session.tfPoints.entries()) {
      const [x, y] = this.toCanvas(p.position, p.rgba[3]);
      ctx.beginPath();
      ctx.arc(x, y, POINT_RADIUS, 0, 2 * Math.PI);
      ctx.fillStyle = rgbaToCss(p.rgba);
      ctx.fill();
      ctx.strokeStyle = i === this.selected ? "#fff" : "#889";
      ctx.lineWidth = i === this.selected ? 2.5 : 1;
      ctx.stroke();
    }
  }
}
