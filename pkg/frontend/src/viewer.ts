/** Interactive viewport: renderer, Z-up orbit camera, lights. */

import * as THREE from 'three';
import { OrbitControls } from 'three/addons/controls/OrbitControls.js';

import type { BuiltScene } from './scene';

export class Viewer {
  private readonly scene = new THREE.Scene();
  private readonly camera: THREE.PerspectiveCamera;
  private readonly renderer: THREE.WebGLRenderer;
  private readonly controls: OrbitControls;
  private current: THREE.Group | null = null;

  constructor(container: HTMLElement) {
    this.camera = new THREE.PerspectiveCamera(
      55,
      container.clientWidth / Math.max(1, container.clientHeight),
      0.05,
      200,
    );
    this.camera.up.set(0, 0, 1);
    this.camera.position.set(4, -4, 3);
    this.camera.lookAt(0, 0, 0);

    this.renderer = new THREE.WebGLRenderer({ antialias: true, alpha: true });
    this.renderer.setSize(container.clientWidth, container.clientHeight);
    container.appendChild(this.renderer.domElement);

    this.controls = new OrbitControls(this.camera, this.renderer.domElement);
    this.controls.enableDamping = true;

    this.scene.add(new THREE.AmbientLight(0xffffff, 0.55));
    const key = new THREE.DirectionalLight(0xffffff, 1.1);
    key.position.set(5, -6, 8);
    this.scene.add(key);
    const fill = new THREE.DirectionalLight(0xffffff, 0.4);
    fill.position.set(-6, 4, 2);
    this.scene.add(fill);
    this.scene.add(new THREE.GridHelper(10, 20, 0x888888, 0xdddddd).rotateX(Math.PI / 2));

    window.addEventListener('resize', () => {
      this.camera.aspect = container.clientWidth / Math.max(1, container.clientHeight);
      this.camera.updateProjectionMatrix();
      this.renderer.setSize(container.clientWidth, container.clientHeight);
    });

    const animate = () => {
      requestAnimationFrame(animate);
      this.controls.update();
      this.renderer.render(this.scene, this.camera);
    };
    animate();
  }

  /** Swap in a new step's scene (an empty scene shows just the grid). */
  show(built: BuiltScene | null): void {
    if (this.current) {
      this.scene.remove(this.current);
    }
    this.current = built ? built.group : null;
    if (this.current) {
      this.scene.add(this.current);
    }
  }
}
