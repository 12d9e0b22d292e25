/**
 * Three.js rendering shell: one mutable mesh with vertex colors, simple
 * orbit/zoom controls, and raycast picking with vertex/target markers.
 * All geometry comes from the server; this module never computes shapes.
 */

import * as THREE from "three";
import { nearestVertexOfFace } from "./picking.js";
import type { TemplateMesh } from "./api.js";

export class MeshViewer {
  private renderer: THREE.WebGLRenderer;
  private scene = new THREE.Scene();
  private camera: THREE.PerspectiveCamera;
  private mesh: THREE.Mesh | null = null;
  private faces: Uint32Array | null = null;
  private markers = new THREE.Group();
  private raycaster = new THREE.Raycaster();
  private rotation = { x: -0.3, y: 0.7, dragging: false, lastX: 0, lastY: 0 };
  private distance = 3.2;

  onPickVertex: (vertexId: number) => void = () => {};

  constructor(private container: HTMLElement) {
    this.renderer = new THREE.WebGLRenderer({ antialias: true });
    this.renderer.setClearColor(0x181a1f);
    this.camera = new THREE.PerspectiveCamera(40, 1, 0.01, 100);
    this.scene.add(new THREE.AmbientLight(0xffffff, 0.55));
    const key = new THREE.DirectionalLight(0xffffff, 1.4);
    key.position.set(2, 2, 3);
    this.scene.add(key);
    this.scene.add(this.markers);
    container.appendChild(this.renderer.domElement);
    this.bindControls();
    this.resize();
    window.addEventListener("resize", () => this.resize());
    this.animate();
  }

  setTemplate(template: TemplateMesh): void {
    const geometry = new THREE.BufferGeometry();
    geometry.setAttribute("position", new THREE.BufferAttribute(template.positions.slice(), 3));
    geometry.setIndex(new THREE.BufferAttribute(template.faces.slice(), 1));
    const colors = new Float32Array(template.positions.length).fill(0.92);
    geometry.setAttribute("color", new THREE.BufferAttribute(colors, 3));
    geometry.computeVertexNormals();
    const material = new THREE.MeshStandardMaterial({
      vertexColors: true,
      roughness: 0.75,
      metalness: 0.05,
    });
    this.mesh = new THREE.Mesh(geometry, material);
    this.faces = template.faces;
    this.scene.add(this.mesh);
  }

  updateVertices(vertices: Float32Array): void {
    if (!this.mesh) return;
    const attr = this.mesh.geometry.getAttribute("position") as THREE.BufferAttribute;
    (attr.array as Float32Array).set(vertices);
    attr.needsUpdate = true;
    this.mesh.geometry.computeVertexNormals();
  }

  updateColors(colors: Float32Array): void {
    if (!this.mesh) return;
    const attr = this.mesh.geometry.getAttribute("color") as THREE.BufferAttribute;
    (attr.array as Float32Array).set(colors);
    attr.needsUpdate = true;
  }

  vertexPosition(vertexId: number): [number, number, number] {
    const attr = this.mesh!.geometry.getAttribute("position") as THREE.BufferAttribute;
    return [attr.getX(vertexId), attr.getY(vertexId), attr.getZ(vertexId)];
  }

  setMarkers(picked: [number, number, number][], targets: [number, number, number][]): void {
    this.markers.clear();
    const add = (p: [number, number, number], color: number) => {
      const ball = new THREE.Mesh(
        new THREE.SphereGeometry(0.02, 12, 12),
        new THREE.MeshBasicMaterial({ color }),
      );
      ball.position.set(p[0], p[1], p[2]);
      this.markers.add(ball);
    };
    picked.forEach((p) => add(p, 0x3366ff)); // selected vertices: blue
    targets.forEach((p) => add(p, 0xff3333)); // target positions: red
  }

  pickAtPointer(clientX: number, clientY: number): number | null {
    if (!this.mesh || !this.faces) return null;
    const rect = this.renderer.domElement.getBoundingClientRect();
    const ndc = new THREE.Vector2(
      ((clientX - rect.left) / rect.width) * 2 - 1,
      -((clientY - rect.top) / rect.height) * 2 + 1,
    );
    this.raycaster.setFromCamera(ndc, this.camera);
    const hits = this.raycaster.intersectObject(this.mesh);
    const faceIndex = hits.length ? hits[0].faceIndex : undefined;
    if (faceIndex === undefined || faceIndex === null) return null;
    const p = hits[0].point;
    return nearestVertexOfFace(
      { faceIndex, point: [p.x, p.y, p.z] },
      this.faces,
      (this.mesh.geometry.getAttribute("position") as THREE.BufferAttribute)
        .array as Float32Array,
    );
  }

  private bindControls(): void {
    const el = this.renderer.domElement;
    el.addEventListener("pointerdown", (e) => {
      if (e.button !== 0 || e.shiftKey) return; // shift-click reserved for picking
      this.rotation.dragging = true;
      this.rotation.lastX = e.clientX;
      this.rotation.lastY = e.clientY;
    });
    window.addEventListener("pointerup", () => (this.rotation.dragging = false));
    window.addEventListener("pointermove", (e) => {
      if (!this.rotation.dragging) return;
      this.rotation.y += (e.clientX - this.rotation.lastX) * 0.008;
      this.rotation.x += (e.clientY - this.rotation.lastY) * 0.008;
      this.rotation.lastX = e.clientX;
      this.rotation.lastY = e.clientY;
    });
    el.addEventListener("wheel", (e) => {
      e.preventDefault();
      this.distance = Math.min(10, Math.max(1.2, this.distance * (1 + e.deltaY * 0.001)));
    });
  }

  private resize(): void {
    const w = this.container.clientWidth || 640;
    const h = this.container.clientHeight || 480;
    this.renderer.setSize(w, h);
    this.camera.aspect = w / h;
    this.camera.updateProjectionMatrix();
  }

  private animate = (): void => {
    requestAnimationFrame(this.animate);
    const { x, y } = this.rotation;
    this.camera.position.set(
      this.distance * Math.cos(x) * Math.sin(y),
      this.distance * Math.sin(x),
      this.distance * Math.cos(x) * Math.cos(y),
    );
    this.camera.lookAt(0, 0, 0);
    this.renderer.render(this.scene, this.camera);
  };
}
