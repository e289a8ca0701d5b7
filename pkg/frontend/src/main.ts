import './style.css';
import { ApiClient } from './api';
import { ReviewApp } from './app';

const root = document.getElementById('app');
if (root === null) throw new Error('missing #app mount point');

const params = new URLSearchParams(window.location.search);
const app = new ReviewApp(root, new ApiClient(''));
void app.init(params.get('split'));
