import { RatingApi } from './api.js';
import { RaterController } from './controller.js';
import { RaterView } from './view.js';

declare global {
  interface Window {
    RATING_API_BASE?: string;
  }
}

const base = window.RATING_API_BASE ?? '';
const api = new RatingApi(base);
const controller = new RaterController(api);
const root = document.getElementById('app');
if (!root) throw new Error('missing #app element');
new RaterView(root, controller, api);
void controller.loadSessions();
