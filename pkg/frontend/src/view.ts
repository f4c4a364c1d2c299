/** DOM rendering for the rating flow.
 *
 * The rendered markup only ever contains pair ids, content-hash image
 * URLs and counts; item identities and generation parameters never reach
 * the page. Images are shown side by side at identical dimensions, with a
 * nearest-neighbor upscaling toggle for inspecting noise texture.
 */

import { RatingApi } from './api.js';
import { ControllerState, RaterController } from './controller.js';

export class RaterView {
  private pixelated = false;
  private zoom = 1;

  constructor(
    private readonly root: HTMLElement,
    private readonly controller: RaterController,
    private readonly api: RatingApi,
    private readonly doc: Document = document,
  ) {
    controller.subscribe((state) => this.render(state));
    this.doc.addEventListener('keydown', (ev) => this.onKey(ev as KeyboardEvent));
  }

  private onKey(ev: KeyboardEvent): void {
    if (this.controller.getState().phase !== 'rating') return;
    if (ev.key === 'ArrowLeft') void this.controller.rate('left');
    else if (ev.key === 'ArrowRight') void this.controller.rate('right');
    else if (ev.key === 's') void this.controller.rate('skip');
  }

  render(state: ControllerState): void {
    this.root.textContent = '';
    if (state.errorMessage) {
      const banner = this.el('div', 'banner', state.errorMessage);
      if (state.pendingCount > 0) {
        banner.append(` (${state.pendingCount} pending)`);
        banner.append(this.button('retry', () => void this.controller.retryPending()));
      } else if (state.phase === 'error') {
        banner.append(this.button('retry', () => void this.retry(state)));
      }
      this.root.append(banner);
    }
    switch (state.phase) {
      case 'sessions':
        this.renderSessions(state);
        break;
      case 'rating':
        this.renderPair(state);
        break;
      case 'complete':
        this.root.append(
          this.el('h2', 'done', 'Session complete'),
          this.el('p', 'summary', `${state.nRated} of ${state.nPairs} pairs rated.`),
        );
        break;
      case 'error':
        break;
    }
  }

  private renderSessions(state: ControllerState): void {
    this.root.append(this.el('h2', '', 'Choose a session'));
    const raterInput = this.doc.createElement('input');
    raterInput.id = 'rater-name';
    raterInput.placeholder = 'your rater name';
    this.root.append(raterInput);
    const list = this.el('ul', 'sessions');
    for (const s of state.sessions) {
      const li = this.el('li', 'session');
      const rated = raterInput.value ? (s.n_rated_by[raterInput.value] ?? 0) : 0;
      li.append(`${s.id} — ${s.n_pairs} pairs`);
      const isDone = rated >= s.n_pairs;
      const btn = this.button(isDone ? 'complete' : 'rate', () => {
        void this.controller.selectSession(s.id, raterInput.value);
      });
      if (isDone) btn.disabled = true;
      li.append(btn);
      list.append(li);
    }
    this.root.append(list);
  }

  private renderPair(state: ControllerState): void {
    if (!state.pair) return;
    const bar = this.el('progress') as HTMLProgressElement;
    bar.max = state.nPairs;
    bar.value = state.nRated;
    this.root.append(bar);

    const stage = this.el('div', 'stage');
    for (const [side, url] of [
      ['left', state.pair.left_image_url],
      ['right', state.pair.right_image_url],
    ] as const) {
      const img = this.doc.createElement('img');
      img.src = this.api.imageUrl(url);
      img.className = `pane ${side}`;
      img.style.imageRendering = this.pixelated ? 'pixelated' : 'auto';
      img.style.transform = `scale(${this.zoom})`;
      img.addEventListener('click', () => void this.controller.rate(side));
      stage.append(img);
    }
    this.root.append(stage);

    const controls = this.el('div', 'controls');
    controls.append(
      this.button('left is better (←)', () => void this.controller.rate('left')),
      this.button('right is better (→)', () => void this.controller.rate('right')),
      this.button('skip (s)', () => void this.controller.rate('skip')),
      this.button(this.pixelated ? 'smooth pixels' : 'sharp pixels', () => {
        this.pixelated = !this.pixelated;
        this.render(this.controller.getState());
      }),
      this.button('zoom', () => {
        this.zoom = this.zoom >= 4 ? 1 : this.zoom * 2;
        this.render(this.controller.getState());
      }),
      this.button('refresh', () => void this.controller.refresh()),
    );
    this.root.append(controls);
  }

  private async retry(state: ControllerState): Promise<void> {
    if (state.sessionId) await this.controller.advance();
    else await this.controller.loadSessions();
  }

  private el(tag: string, className = '', text = ''): HTMLElement {
    const node = this.doc.createElement(tag);
    if (className) node.className = className;
    if (text) node.textContent = text;
    return node;
  }

  private button(label: string, onClick: () => void): HTMLButtonElement {
    const btn = this.doc.createElement('button');
    btn.textContent = label;
    btn.addEventListener('click', onClick);
    return btn;
  }
}
